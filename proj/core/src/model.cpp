#include "volnp/model.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "volnp/errors.hpp"
#include "volnp/rng.hpp"

namespace volnp::model {

namespace {

using ad::Matrix;
using ad::Tape;
using ad::Tensor;

struct LayoutBuilder {
    std::vector<ParamView> views;
    std::size_t offset = 0;

    void add(std::string name, int rows, int cols) {
        views.push_back({std::move(name), offset, rows, cols});
        offset += static_cast<std::size_t>(rows) * cols;
    }
    void add_mlp(const std::string& prefix, int in, int hidden, int n_hidden, int out) {
        int cur = in;
        for (int l = 0; l < n_hidden; ++l) {
            add(prefix + "." + std::to_string(l) + ".w", cur, hidden);
            add(prefix + "." + std::to_string(l) + ".b", 1, hidden);
            cur = hidden;
        }
        add(prefix + "." + std::to_string(n_hidden) + ".w", cur, out);
        add(prefix + "." + std::to_string(n_hidden) + ".b", 1, out);
    }
    void add_ln(const std::string& prefix, int d) {
        add(prefix + ".g", 1, d);
        add(prefix + ".b", 1, d);
    }
    void add_attention(const std::string& prefix, int d) {
        add(prefix + ".wq", d, d);
        add(prefix + ".wk", d, d);
        add(prefix + ".wv", d, d);
        add(prefix + ".wo", d, d);
    }
    void add_ffn(const std::string& prefix, int d, int mult) {
        add(prefix + ".0.w", d, d * mult);
        add(prefix + ".0.b", 1, d * mult);
        add(prefix + ".1.w", d * mult, d);
        add(prefix + ".1.b", 1, d);
    }
};

std::vector<ParamView> build_layout(const ModelConfig& cfg) {
    LayoutBuilder b;
    b.add_mlp("phi_e", 3, cfg.mlp_width, cfg.mlp_hidden_layers, cfg.d_r);
    for (int l = 0; l < cfg.n_sa_blocks; ++l) {
        const std::string p = "enc." + std::to_string(l);
        b.add_ln(p + ".ln1", cfg.d_r);
        b.add_attention(p, cfg.d_r);
        b.add_ln(p + ".ln2", cfg.d_r);
        b.add_ffn(p + ".ffn", cfg.d_r, cfg.ffn_mult);
    }
    for (int l = 0; l < cfg.n_ca_blocks; ++l) {
        const std::string p = "dec." + std::to_string(l);
        b.add_ln(p + ".lnq", cfg.d_r);
        b.add_ln(p + ".lnkv", cfg.d_r);
        b.add_attention(p, cfg.d_r);
        b.add_ln(p + ".ln2", cfg.d_r);
        b.add_ffn(p + ".ffn", cfg.d_r, cfg.ffn_mult);
    }
    b.add_mlp("phi_d", cfg.d_r, cfg.mlp_width, cfg.mlp_hidden_layers, 2);
    return std::move(b.views);
}

Matrix view_matrix(const ModelParams& p, const ParamView& v) {
    Matrix m(v.rows, v.cols);
    std::copy(p.data.begin() + static_cast<std::ptrdiff_t>(v.offset),
              p.data.begin() + static_cast<std::ptrdiff_t>(v.offset + v.size()), m.a.begin());
    return m;
}

// gamma for a batch of coordinates, one row each
Matrix encoding_matrix(const std::vector<Coordinate>& coords, const ModelConfig& cfg) {
    Matrix out(static_cast<int>(coords.size()), cfg.d_r);
    const int half = cfg.d_r / 2;
    const int n_freq = half / 2;
    for (int i = 0; i < out.rows; ++i) {
        const double xs[2] = {coords[static_cast<std::size_t>(i)].k / cfg.k_scale,
                              coords[static_cast<std::size_t>(i)].tau / cfg.tau_scale};
        double* row = out.row(i);
        for (int h = 0; h < 2; ++h) {
            for (int f = 0; f < n_freq; ++f) {
                const double omega = std::pow(10000.0, -2.0 * f / half);
                row[h * half + 2 * f] = std::sin(xs[h] * omega);
                row[h * half + 2 * f + 1] = std::cos(xs[h] * omega);
            }
        }
    }
    return out;
}

Tensor mlp_forward(Tape& t, const BoundParams& bp, const std::string& prefix, int n_hidden,
                   Tensor x) {
    for (int l = 0; l <= n_hidden; ++l) {
        const std::string layer = prefix + "." + std::to_string(l);
        x = t.add(t.matmul(x, bp.at(layer + ".w")), bp.at(layer + ".b"));
        if (l < n_hidden) x = t.gelu(x);
    }
    return x;
}

Tensor mha(Tape& t, const BoundParams& bp, const std::string& prefix, Tensor q_in, Tensor kv_in,
           const ModelConfig& cfg) {
    const Tensor q = t.matmul(q_in, bp.at(prefix + ".wq"));
    const Tensor k = t.matmul(kv_in, bp.at(prefix + ".wk"));
    const Tensor v = t.matmul(kv_in, bp.at(prefix + ".wv"));
    const int dk = cfg.d_k();
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    Tensor heads;
    for (int h = 0; h < cfg.n_heads; ++h) {
        const Tensor qh = t.slice_cols(q, h * dk, (h + 1) * dk);
        const Tensor kh = t.slice_cols(k, h * dk, (h + 1) * dk);
        const Tensor vh = t.slice_cols(v, h * dk, (h + 1) * dk);
        const Tensor scores = t.scale(t.matmul(qh, t.transpose(kh)), inv_sqrt_dk);
        const Tensor attn = t.row_softmax(scores);
        const Tensor oh = t.matmul(attn, vh);
        heads = (h == 0) ? oh : t.concat_cols(heads, oh);
    }
    return t.matmul(heads, bp.at(prefix + ".wo"));
}

Tensor ffn_forward(Tape& t, const BoundParams& bp, const std::string& prefix, Tensor x) {
    x = t.gelu(t.add(t.matmul(x, bp.at(prefix + ".0.w")), bp.at(prefix + ".0.b")));
    return t.add(t.matmul(x, bp.at(prefix + ".1.w")), bp.at(prefix + ".1.b"));
}

}  // namespace

void ModelConfig::validate() const {
    if (d_r < 4 || d_r % n_heads != 0 || d_r % 4 != 0)
        throw ConfigError("ModelConfig: d_r must be a positive multiple of n_heads and of 4");
    if (n_sa_blocks < 1 || n_ca_blocks < 1 || n_heads < 1 || mlp_hidden_layers < 1 ||
        mlp_width < 1 || ffn_mult < 1)
        throw ConfigError("ModelConfig: all dimensions must be >= 1");
    if (!(k_scale > 0.0) || !(tau_scale > 0.0))
        throw ConfigError("ModelConfig: coordinate scales must be positive");
    if (!(log_var_lo < log_var_hi)) throw ConfigError("ModelConfig: empty log-variance clamp");
}

const ParamView& ModelParams::find(std::string_view name) const {
    for (const ParamView& v : views)
        if (v.name == name) return v;
    throw ConfigError("ModelParams: unknown parameter '" + std::string(name) + "'");
}

std::size_t param_count(const ModelConfig& cfg) {
    cfg.validate();
    const auto views = build_layout(cfg);
    std::size_t n = 0;
    for (const ParamView& v : views) n += v.size();
    return n;
}

ModelParams make_params(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams p;
    p.config = cfg;
    p.views = build_layout(cfg);
    std::size_t n = 0;
    for (const ParamView& v : p.views) n += v.size();
    p.data.assign(n, 0.0);
    return p;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams p = make_params(cfg);
    Rng rng(seed);
    const std::string head_w = "phi_d." + std::to_string(cfg.mlp_hidden_layers) + ".w";
    const std::string head_b = "phi_d." + std::to_string(cfg.mlp_hidden_layers) + ".b";
    for (const ParamView& v : p.views) {
        double* dst = p.data.data() + v.offset;
        if (v.name.ends_with(".g")) {
            std::fill(dst, dst + v.size(), 1.0);
        } else if (v.name.ends_with(".b")) {
            std::fill(dst, dst + v.size(), 0.0);
            if (v.name == head_b) {
                dst[0] = 0.2;  // initial mu: a plain 20-vol constant
                dst[1] = 0.0;  // initial log-variance near 0
            }
        } else {
            const double bound = std::sqrt(1.0 / v.rows);
            const double scale = (v.name == head_w) ? 0.01 : 1.0;
            for (std::size_t i = 0; i < v.size(); ++i)
                dst[i] = scale * rng.uniform(-bound, bound);
        }
    }
    return p;
}

std::vector<double> positional_encoding(const Coordinate& coord, const ModelConfig& cfg) {
    cfg.validate();
    const Matrix m = encoding_matrix({coord}, cfg);
    return m.a;
}

ad::Tensor BoundParams::at(std::string_view name) const {
    const std::vector<ParamView>& views = source->views;
    for (std::size_t i = 0; i < views.size(); ++i)
        if (views[i].name == name) return leaves[i];
    throw ConfigError("BoundParams: unknown parameter '" + std::string(name) + "'");
}

BoundParams bind_params(ad::Tape& tape, const ModelParams& params) {
    BoundParams bp;
    bp.source = &params;
    bp.leaves.reserve(params.views.size());
    for (const ParamView& v : params.views) bp.leaves.push_back(tape.leaf(view_matrix(params, v)));
    return bp;
}

ad::Tensor encode(ad::Tape& tape, const BoundParams& bp, const std::vector<Quote>& context) {
    if (context.empty()) throw ShapeMismatch("encode: empty context");
    const ModelConfig& cfg = bp.source->config;

    Matrix feat(static_cast<int>(context.size()), 3);
    std::vector<Coordinate> coords;
    coords.reserve(context.size());
    for (int i = 0; i < feat.rows; ++i) {
        const Quote& q = context[static_cast<std::size_t>(i)];
        feat(i, 0) = q.coord.k / cfg.k_scale;
        feat(i, 1) = q.coord.tau / cfg.tau_scale;
        feat(i, 2) = q.vol;
        coords.push_back(q.coord);
    }

    Tensor h = tape.add(mlp_forward(tape, bp, "phi_e", cfg.mlp_hidden_layers, tape.constant(std::move(feat))),
                        tape.constant(encoding_matrix(coords, cfg)));
    for (int l = 0; l < cfg.n_sa_blocks; ++l) {
        const std::string p = "enc." + std::to_string(l);
        const Tensor x_ln = tape.layer_norm(h, bp.at(p + ".ln1.g"), bp.at(p + ".ln1.b"));
        h = tape.add(h, mha(tape, bp, p, x_ln, x_ln, cfg));
        const Tensor h_ln = tape.layer_norm(h, bp.at(p + ".ln2.g"), bp.at(p + ".ln2.b"));
        h = tape.add(h, ffn_forward(tape, bp, p + ".ffn", h_ln));
    }
    return h;
}

ad::Tensor decode(ad::Tape& tape, const BoundParams& bp, ad::Tensor h_context,
                  const std::vector<Coordinate>& targets) {
    if (targets.empty()) throw ShapeMismatch("decode: empty target list");
    if (!h_context.valid() || h_context.rows() < 1)
        throw ShapeMismatch("decode: empty context representation");
    const ModelConfig& cfg = bp.source->config;

    Tensor z = tape.constant(encoding_matrix(targets, cfg));
    for (int l = 0; l < cfg.n_ca_blocks; ++l) {
        const std::string p = "dec." + std::to_string(l);
        const Tensor zq = tape.layer_norm(z, bp.at(p + ".lnq.g"), bp.at(p + ".lnq.b"));
        const Tensor hkv = tape.layer_norm(h_context, bp.at(p + ".lnkv.g"), bp.at(p + ".lnkv.b"));
        z = tape.add(z, mha(tape, bp, p, zq, hkv, cfg));
        const Tensor z_ln = tape.layer_norm(z, bp.at(p + ".ln2.g"), bp.at(p + ".ln2.b"));
        z = tape.add(z, ffn_forward(tape, bp, p + ".ffn", z_ln));
    }

    const Tensor out = mlp_forward(tape, bp, "phi_d", cfg.mlp_hidden_layers, z);
    const Tensor mu = tape.slice_cols(out, 0, 1);
    const Tensor log_var = tape.clamp(tape.slice_cols(out, 1, 2), cfg.log_var_lo, cfg.log_var_hi);
    return tape.concat_cols(mu, log_var);
}

ad::Tensor nll_loss(ad::Tape& tape, ad::Tensor pred, const std::vector<Quote>& targets) {
    if (pred.rows() != static_cast<int>(targets.size()) || pred.cols() != 2)
        throw LengthMismatch("nll_loss: predictions and targets differ in length");
    Matrix y(pred.rows(), 1);
    for (int i = 0; i < y.rows; ++i) y(i, 0) = targets[static_cast<std::size_t>(i)].vol;
    const Tensor mu = tape.slice_cols(pred, 0, 1);
    const Tensor log_var = tape.slice_cols(pred, 1, 2);
    const Tensor diff = tape.sub(mu, tape.constant(std::move(y)));
    const Tensor weighted = tape.mul(tape.exp(tape.scale(log_var, -1.0)), tape.mul(diff, diff));
    return tape.scale(tape.sum(tape.add(weighted, log_var)), 0.5);
}

double nll(const std::vector<PredictiveDistribution>& preds, const std::vector<Quote>& targets) {
    if (preds.size() != targets.size())
        throw LengthMismatch("nll: predictions and targets differ in length");
    double loss = 0.0;
    for (std::size_t j = 0; j < preds.size(); ++j) {
        const double d = targets[j].vol - preds[j].mu;
        loss += std::exp(-preds[j].log_var) * d * d + preds[j].log_var;
    }
    return 0.5 * loss;
}

std::vector<PredictiveDistribution> predict(const ModelParams& params,
                                            const std::vector<Quote>& context,
                                            const std::vector<Coordinate>& targets) {
    ad::Tape tape;
    const BoundParams bp = bind_params(tape, params);
    const Tensor h = encode(tape, bp, context);
    const Tensor pred = decode(tape, bp, h, targets);
    std::vector<PredictiveDistribution> out(targets.size());
    for (std::size_t j = 0; j < out.size(); ++j) {
        out[j].mu = pred.value()(static_cast<int>(j), 0);
        out[j].log_var = pred.value()(static_cast<int>(j), 1);
    }
    return out;
}

double loss_and_grad(const ModelParams& params, const Task& task, std::span<double> grad_out) {
    if (grad_out.size() != params.data.size())
        throw ShapeMismatch("loss_and_grad: gradient buffer size mismatch");
    ad::Tape tape;
    const BoundParams bp = bind_params(tape, params);
    const Tensor h = encode(tape, bp, task.context);
    std::vector<Coordinate> coords;
    coords.reserve(task.targets.size());
    for (const Quote& q : task.targets) coords.push_back(q.coord);
    const Tensor pred = decode(tape, bp, h, coords);
    const Tensor loss = nll_loss(tape, pred, task.targets);
    tape.backward(loss);

    for (std::size_t i = 0; i < params.views.size(); ++i) {
        const ParamView& v = params.views[i];
        const Matrix& g = bp.leaves[i].grad();
        for (std::size_t j = 0; j < v.size(); ++j) grad_out[v.offset + j] += g.a[j];
    }
    return loss.value()(0, 0);
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
    nlohmann::json j;
    j["format"] = "volnp-checkpoint";
    j["version"] = 1;
    j["config"] = {{"d_r", params.config.d_r},
                   {"n_sa_blocks", params.config.n_sa_blocks},
                   {"n_ca_blocks", params.config.n_ca_blocks},
                   {"n_heads", params.config.n_heads},
                   {"mlp_hidden_layers", params.config.mlp_hidden_layers},
                   {"mlp_width", params.config.mlp_width},
                   {"ffn_mult", params.config.ffn_mult},
                   {"k_scale", params.config.k_scale},
                   {"tau_scale", params.config.tau_scale},
                   {"log_var_lo", params.config.log_var_lo},
                   {"log_var_hi", params.config.log_var_hi}};
    nlohmann::json jp = nlohmann::json::object();
    for (const ParamView& v : params.views) {
        jp[v.name] = std::vector<double>(params.data.begin() + static_cast<std::ptrdiff_t>(v.offset),
                                         params.data.begin() + static_cast<std::ptrdiff_t>(v.offset + v.size()));
    }
    j["params"] = std::move(jp);

    std::ofstream out(path);
    if (!out) throw IoError("save_checkpoint: cannot open " + path.string());
    out << j.dump();
    if (!out) throw IoError("save_checkpoint: write failed for " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_checkpoint: cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("load_checkpoint: " + path.string() + ": " + e.what());
    }
    if (j.value("format", "") != "volnp-checkpoint" || j.value("version", 0) != 1)
        throw IoError("load_checkpoint: " + path.string() + " is not a version-1 checkpoint");

    ModelConfig cfg;
    const auto& jc = j.at("config");
    cfg.d_r = jc.at("d_r").get<int>();
    cfg.n_sa_blocks = jc.at("n_sa_blocks").get<int>();
    cfg.n_ca_blocks = jc.at("n_ca_blocks").get<int>();
    cfg.n_heads = jc.at("n_heads").get<int>();
    cfg.mlp_hidden_layers = jc.at("mlp_hidden_layers").get<int>();
    cfg.mlp_width = jc.at("mlp_width").get<int>();
    cfg.ffn_mult = jc.at("ffn_mult").get<int>();
    cfg.k_scale = jc.at("k_scale").get<double>();
    cfg.tau_scale = jc.at("tau_scale").get<double>();
    cfg.log_var_lo = jc.at("log_var_lo").get<double>();
    cfg.log_var_hi = jc.at("log_var_hi").get<double>();

    ModelParams p = make_params(cfg);
    const auto& jp = j.at("params");
    for (const ParamView& v : p.views) {
        const auto it = jp.find(v.name);
        if (it == jp.end())
            throw IoError("load_checkpoint: missing parameter '" + v.name + "'");
        const auto values = it->get<std::vector<double>>();
        if (values.size() != v.size())
            throw IoError("load_checkpoint: parameter '" + v.name + "' has wrong size");
        std::copy(values.begin(), values.end(), p.data.begin() + static_cast<std::ptrdiff_t>(v.offset));
    }
    return p;
}

}  // namespace volnp::model
