#include "vdsm/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "vdsm/adam.hpp"
#include "vdsm/common.hpp"

namespace vdsm {

using nlohmann::json;

std::string model_kind_name(ModelKind m) {
    switch (m) {
        case ModelKind::dsm: return "dsm";
        case ModelKind::vdsm_cat: return "vdsm_cat";
        case ModelKind::vdsm_clus: return "vdsm_clus";
    }
    throw std::invalid_argument("unknown model kind");
}

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "dsm") return ModelKind::dsm;
    if (name == "vdsm_cat") return ModelKind::vdsm_cat;
    if (name == "vdsm_clus") return ModelKind::vdsm_clus;
    throw std::invalid_argument("unknown model: " + name);
}

std::string dataset_kind_name(DatasetKind d) {
    switch (d) {
        case DatasetKind::support: return "support";
        case DatasetKind::flchain: return "flchain";
        case DatasetKind::synthetic: return "synthetic";
    }
    throw std::invalid_argument("unknown dataset kind");
}

DatasetKind dataset_kind_from_name(const std::string& name) {
    if (name == "support") return DatasetKind::support;
    if (name == "flchain") return DatasetKind::flchain;
    if (name == "synthetic") return DatasetKind::synthetic;
    throw std::invalid_argument("unknown dataset: " + name);
}

void ExperimentConfig::validate() const {
    if (k < 1) throw std::invalid_argument("config: k must be >= 1");
    if (!(discount > 0.0 && discount <= 1.0))
        throw std::invalid_argument("config: discount must lie in (0,1]");
    if (!(lr > 0.0)) throw std::invalid_argument("config: lr must be positive");
    if (epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (seeds.empty()) throw std::invalid_argument("config: seeds must be non-empty");
    if (!(tau > 0.0)) throw std::invalid_argument("config: tau must be positive");
    if (cat_latent_dims < 1) throw std::invalid_argument("config: cat_latent_dims must be >= 1");
    if (d_z < 1) throw std::invalid_argument("config: d_z must be >= 1");
    if (warmup_epochs < 0) throw std::invalid_argument("config: warmup_epochs must be >= 0");
    if (!(warmup_lr > 0.0)) throw std::invalid_argument("config: warmup_lr must be positive");
    if (!(sigma_x > 0.0)) throw std::invalid_argument("config: sigma_x must be positive");
    if (elbo_samples < 1) throw std::invalid_argument("config: elbo_samples must be >= 1");
    if (patience < 1) throw std::invalid_argument("config: patience must be >= 1");
    for (Eigen::Index h : hidden_dims)
        if (h < 1) throw std::invalid_argument("config: hidden dims must be >= 1");
    const double rsum = split_ratios[0] + split_ratios[1] + split_ratios[2];
    if (std::abs(rsum - 1.0) > 1e-9)
        throw std::invalid_argument("config: split_ratios must sum to 1");
    if (!(split_ratios[0] > 0.0))
        throw std::invalid_argument("config: train ratio must be positive");
    if (dataset != DatasetKind::synthetic && data_path.empty())
        throw std::invalid_argument("config: data_path required for file datasets");
    if (model == ModelKind::vdsm_cat && k < 2)
        throw std::invalid_argument("config: vdsm_cat needs k >= 2");
    if (synthetic_n < 1) throw std::invalid_argument("config: synthetic_n must be >= 1");
}

namespace {

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

Matrix matrix_from_json(const json& j) {
    const auto rows = j.size();
    if (rows == 0) return Matrix(0, 0);
    const auto cols = j.at(0).size();
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                j.at(r).at(c).get<double>();
    return m;
}

json synthetic_to_json(const SyntheticSpec& s) {
    json j;
    j["k"] = s.k;
    j["pi"] = s.pi;
    j["mu"] = matrix_to_json(s.mu);
    j["sigma"] = matrix_to_json(s.sigma);
    j["eta"] = s.eta;
    j["beta"] = s.beta;
    j["censoring_rate"] = s.censoring_rate;
    return j;
}

SyntheticSpec synthetic_from_json(const json& j) {
    SyntheticSpec s = default_synthetic_spec();
    s.k = j.value("k", s.k);
    s.pi = j.value("pi", s.pi);
    if (j.contains("mu")) s.mu = matrix_from_json(j.at("mu"));
    if (j.contains("sigma")) s.sigma = matrix_from_json(j.at("sigma"));
    s.eta = j.value("eta", s.eta);
    s.beta = j.value("beta", s.beta);
    s.censoring_rate = j.value("censoring_rate", s.censoring_rate);
    return s;
}

}  // namespace

json ExperimentConfig::to_json() const {
    json j;
    j["model"] = model_kind_name(model);
    j["dataset"] = dataset_kind_name(dataset);
    j["k"] = k;
    j["family"] = family_name(family);
    j["discount"] = discount;
    j["lr"] = lr;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["seeds"] = seeds;
    j["elbo_mode"] = elbo_mode_name(elbo_mode);
    j["hidden_dims"] = hidden_dims;
    j["activation"] = activation_name(activation);
    j["shift_head"] = shift_head;
    j["clip_norm"] = clip_norm;
    j["patience"] = patience;
    j["tau"] = tau;
    j["tau_anneal"] = tau_anneal;
    j["cat_latent_dims"] = cat_latent_dims;
    j["d_z"] = d_z;
    j["warmup_epochs"] = warmup_epochs;
    j["warmup_lr"] = warmup_lr;
    j["sigma_x"] = sigma_x;
    j["elbo_samples"] = elbo_samples;
    j["data_path"] = data_path;
    j["synthetic_n"] = synthetic_n;
    j["synthetic_seed"] = synthetic_seed;
    j["synthetic"] = synthetic_to_json(synthetic);
    j["split_ratios"] = split_ratios;
    j["out_dir"] = out_dir;
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j, bool validate) {
    ExperimentConfig c;
    if (j.contains("model")) c.model = model_kind_from_name(j.at("model").get<std::string>());
    if (j.contains("dataset"))
        c.dataset = dataset_kind_from_name(j.at("dataset").get<std::string>());
    c.k = j.value("k", c.k);
    if (j.contains("family")) c.family = family_from_name(j.at("family").get<std::string>());
    c.discount = j.value("discount", c.discount);
    c.lr = j.value("lr", c.lr);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seeds = j.value("seeds", c.seeds);
    if (j.contains("elbo_mode"))
        c.elbo_mode = elbo_mode_from_name(j.at("elbo_mode").get<std::string>());
    c.hidden_dims = j.value("hidden_dims", c.hidden_dims);
    if (j.contains("activation"))
        c.activation = activation_from_name(j.at("activation").get<std::string>());
    c.shift_head = j.value("shift_head", c.shift_head);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.patience = j.value("patience", c.patience);
    c.tau = j.value("tau", c.tau);
    c.tau_anneal = j.value("tau_anneal", c.tau_anneal);
    c.cat_latent_dims = j.value("cat_latent_dims", c.cat_latent_dims);
    c.d_z = j.value("d_z", c.d_z);
    c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
    c.warmup_lr = j.value("warmup_lr", c.warmup_lr);
    c.sigma_x = j.value("sigma_x", c.sigma_x);
    c.elbo_samples = j.value("elbo_samples", c.elbo_samples);
    c.data_path = j.value("data_path", c.data_path);
    c.synthetic_n = j.value("synthetic_n", c.synthetic_n);
    c.synthetic_seed = j.value("synthetic_seed", c.synthetic_seed);
    if (j.contains("synthetic")) c.synthetic = synthetic_from_json(j.at("synthetic"));
    c.split_ratios = j.value("split_ratios", c.split_ratios);
    c.out_dir = j.value("out_dir", c.out_dir);
    if (validate) c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config: parse error in '" + path + "': " + e.what());
    }
    return from_json(j);
}

std::string ExperimentConfig::canonical_text() const { return to_json().dump(2); }

void ExperimentConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("override must look like key=value: " + assignment);
    std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    for (char& c : key)
        if (c == '.') c = '/';

    json value = json::parse(raw, nullptr, /*allow_exceptions=*/false);
    if (value.is_discarded()) value = raw;  // fall back to a plain string

    json j = to_json();
    j[json::json_pointer("/" + key)] = value;
    // range checks happen once every override is in, not per assignment
    *this = from_json(j, /*validate=*/false);
}

// ---------------------------------------------------------------------------
// ModelBundle

ModelBundle ModelBundle::create(const ExperimentConfig& cfg, std::uint64_t seed,
                                Eigen::Index input_dim, RngStream& rng) {
    ModelBundle b;
    b.kind_ = cfg.model;
    b.seed_ = seed;

    std::optional<MlpSpec> gating;
    if (cfg.model == ModelKind::dsm)
        gating = MlpSpec{input_dim, cfg.hidden_dims, cfg.k, cfg.activation};
    std::optional<MlpSpec> shift;
    if (cfg.shift_head) shift = MlpSpec{input_dim, cfg.hidden_dims, 2 * cfg.k, cfg.activation};
    b.mixture_.emplace(cfg.k, cfg.family, gating, rng, shift);

    if (cfg.model == ModelKind::vdsm_cat) {
        const Eigen::Index latent = static_cast<Eigen::Index>(cfg.cat_latent_dims) * cfg.k;
        b.cat_.emplace(CatLatentSpec{cfg.cat_latent_dims, cfg.k, cfg.tau},
                       MlpSpec{input_dim, cfg.hidden_dims, latent, cfg.activation},
                       MlpSpec{latent, cfg.hidden_dims, input_dim, cfg.activation}, rng);
    } else if (cfg.model == ModelKind::vdsm_clus) {
        b.clus_.emplace(cfg.k, cfg.d_z,
                        MlpSpec{input_dim, cfg.hidden_dims, 2 * cfg.d_z, cfg.activation},
                        MlpSpec{cfg.d_z, cfg.hidden_dims, input_dim, cfg.activation}, rng,
                        cfg.sigma_x);
    }
    return b;
}

std::vector<ParamTensor*> ModelBundle::parameters() {
    std::vector<ParamTensor*> out = mixture_->parameters();
    if (cat_)
        for (ParamTensor* p : cat_->parameters()) out.push_back(p);
    if (clus_)
        for (ParamTensor* p : clus_->parameters()) out.push_back(p);
    return out;
}

Vector ModelBundle::gate_vector(const Vector& x_std) const {
    switch (kind_) {
        case ModelKind::dsm: return mixture_->gate_probs(x_std);
        case ModelKind::vdsm_cat: return cat_->cluster_posterior(x_std);
        case ModelKind::vdsm_clus: return clus_->cluster_posterior(x_std);
    }
    throw std::logic_error("unreachable");
}

Matrix ModelBundle::gate_matrix(const Matrix& x_std) const {
    switch (kind_) {
        case ModelKind::dsm: return mixture_->gate_probs(x_std);
        case ModelKind::vdsm_cat: return cat_->cluster_posterior(x_std);
        case ModelKind::vdsm_clus: return clus_->cluster_posterior(x_std);
    }
    throw std::logic_error("unreachable");
}

double ModelBundle::risk(const Vector& x_std, double horizon) const {
    return mixture_->predict_risk(x_std, horizon, gate_vector(x_std));
}

Var ModelBundle::gate_log_probs_graph(Tape& tape, Var x) {
    switch (kind_) {
        case ModelKind::dsm: return mixture_->gate_log_probs_graph(tape, x);
        case ModelKind::vdsm_cat: return cat_->cluster_log_posterior_graph(tape, x);
        case ModelKind::vdsm_clus: return clus_->cluster_log_posterior_graph(tape, x);
    }
    throw std::logic_error("unreachable");
}

void ModelBundle::save(const std::string& path, const std::string& config_text) const {
    Checkpoint ck;
    ck.metadata["model"] = model_kind_name(kind_);
    ck.metadata["seed"] = seed_;
    ck.metadata["config"] = config_text;
    mixture_->add_to_checkpoint(ck);
    if (cat_) {
        ck.metadata["has_cat"] = true;
        cat_->add_to_checkpoint(ck);
    }
    if (clus_) {
        ck.metadata["has_clus"] = true;
        clus_->add_to_checkpoint(ck);
    }
    ck.put_array("transform.median", transform_.median.transpose());
    ck.put_array("transform.mean", transform_.mean.transpose());
    ck.put_array("transform.stddev", transform_.stddev.transpose());
    ck.save(path);
}

ModelBundle ModelBundle::load(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    ModelBundle b;
    b.kind_ = model_kind_from_name(ck.metadata.at("model").get<std::string>());
    b.seed_ = ck.metadata.at("seed").get<std::uint64_t>();
    b.mixture_.emplace(MixtureModel::from_checkpoint(ck));
    if (ck.metadata.value("has_cat", false)) b.cat_.emplace(CatVae::from_checkpoint(ck));
    if (ck.metadata.value("has_clus", false)) b.clus_.emplace(ClusVae::from_checkpoint(ck));
    b.transform_.median = ck.get_array("transform.median").row(0).transpose();
    b.transform_.mean = ck.get_array("transform.mean").row(0).transpose();
    b.transform_.stddev = ck.get_array("transform.stddev").row(0).transpose();
    return b;
}

// ---------------------------------------------------------------------------
// losses

Matrix make_vae_noise(const ExperimentConfig& cfg, RngStream& rng, Eigen::Index n) {
    const Eigen::Index rows = n * std::max(1, cfg.elbo_samples);
    if (cfg.model == ModelKind::vdsm_cat)
        return gumbel_sample(rng, rows, static_cast<Eigen::Index>(cfg.cat_latent_dims) * cfg.k);
    if (cfg.model == ModelKind::vdsm_clus) {
        Matrix eps(rows, cfg.d_z);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (int j = 0; j < cfg.d_z; ++j) eps(i, j) = rng.normal();
        return eps;
    }
    return Matrix(0, 0);
}

Var dsm_part_loss_graph(Tape& tape, ModelBundle& bundle, const Batch& batch,
                        const ExperimentConfig& cfg) {
    const Eigen::Index n = batch.size();
    if (n == 0) return tape.scalar(0.0);
    Batch unc = batch.subset(1);
    Batch cen = batch.subset(0);
    Var total = tape.scalar(0.0);
    if (unc.size() > 0) {
        Var x = tape.constant(unc.x);
        Var lg = bundle.gate_log_probs_graph(tape, x);
        Var lp = bundle.mixture().component_log_pdf_graph(tape, x, unc.u);
        total = tape.add(total, uncensored_loss_graph(tape, lg, lp, cfg.elbo_mode));
    }
    if (cen.size() > 0) {
        Var x = tape.constant(cen.x);
        Var lg = bundle.gate_log_probs_graph(tape, x);
        Var ls = bundle.mixture().component_log_survival_graph(tape, x, cen.u);
        total = tape.add(total,
                         tape.scale(censored_loss_graph(tape, lg, ls, cfg.elbo_mode), cfg.discount));
    }
    return tape.scale(total, 1.0 / static_cast<double>(n));
}

Var joint_loss_graph(Tape& tape, ModelBundle& bundle, const Batch& batch,
                     const ExperimentConfig& cfg, const Matrix& vae_noise) {
    Var loss = dsm_part_loss_graph(tape, bundle, batch, cfg);
    if (bundle.kind() == ModelKind::dsm) return loss;

    const int samples = std::max(1, cfg.elbo_samples);
    const Eigen::Index n = batch.size();
    if (vae_noise.rows() != samples * n)
        throw std::invalid_argument("joint_loss_graph: noise rows must be elbo_samples * n");
    Var x = tape.constant(batch.x);
    Var vae_total = tape.scalar(0.0);
    for (int s = 0; s < samples; ++s) {
        const Matrix slice = vae_noise.middleRows(static_cast<Eigen::Index>(s) * n, n);
        Var part = bundle.kind() == ModelKind::vdsm_cat
                       ? bundle.cat()->loss_graph(tape, x, slice)
                       : bundle.clus()->loss_graph(tape, x, slice);
        vae_total = tape.add(vae_total, part);
    }
    return tape.add(loss, tape.scale(vae_total, 1.0 / static_cast<double>(samples)));
}

// ---------------------------------------------------------------------------
// data and training

DataWithLabels load_dataset(const ExperimentConfig& cfg) {
    DataWithLabels out;
    switch (cfg.dataset) {
        case DatasetKind::support: out.data = load_support(cfg.data_path); break;
        case DatasetKind::flchain: out.data = load_flchain(cfg.data_path); break;
        case DatasetKind::synthetic: {
            SyntheticData s = generate_synthetic(cfg.synthetic, cfg.synthetic_n,
                                                 cfg.synthetic_seed);
            out.data.records = std::move(s.records);
            out.labels = std::move(s.labels);
            for (Eigen::Index j = 0; j < cfg.synthetic.mu.cols(); ++j)
                out.data.feature_names.push_back("x" + std::to_string(j));
            break;
        }
    }
    return out;
}

namespace {

std::vector<Matrix> snapshot_params(const std::vector<ParamTensor*>& params) {
    std::vector<Matrix> out;
    out.reserve(params.size());
    for (const ParamTensor* p : params) out.push_back(p->value);
    return out;
}

void restore_params(const std::vector<ParamTensor*>& params, const std::vector<Matrix>& snap) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snap[i];
}

double eval_joint_loss(ModelBundle& bundle, const std::vector<SurvivalRecord>& records,
                       const ExperimentConfig& cfg, RngStream& noise_rng) {
    if (records.empty()) return std::numeric_limits<double>::quiet_NaN();
    Batch batch = Batch::from_records(records);
    Matrix noise = make_vae_noise(cfg, noise_rng, batch.size());
    Tape tape;
    return tape.scalar_value(joint_loss_graph(tape, bundle, batch, cfg, noise));
}

}  // namespace

SingleRun train_single(const ExperimentConfig& cfg, std::uint64_t seed,
                       const LoadedDataset& data) {
    DatasetSplit split = split_standardize(data.records, cfg.split_ratios, seed);
    const Eigen::Index input_dim = split.train[0].x.size();

    RngStream root(seed);
    RngStream init_rng = root.fork(1);
    RngStream order_rng = root.fork(2);
    RngStream noise_rng = root.fork(3);
    RngStream val_noise_rng = root.fork(4);
    RngStream warmup_rng = root.fork(5);

    SingleRun run{ModelBundle::create(cfg, seed, input_dim, init_rng), {}, -1, false};
    run.bundle.transform() = split.transform;

    double tmax = 0.0;
    for (const auto& r : split.train) tmax = std::max(tmax, r.u);
    run.bundle.mixture().set_time_scale(tmax > 0.0 ? tmax : 1.0);

    if (cfg.model == ModelKind::vdsm_clus) {
        Batch train_all = Batch::from_records(split.train);
        AdamConfig warm;
        warm.lr = cfg.warmup_lr;
        warm.clip_norm = cfg.clip_norm;
        run.bundle.clus()->pretrain_and_init(train_all.x, cfg.warmup_epochs, warm, warmup_rng);
    }

    auto params = run.bundle.parameters();
    AdamConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    opt_cfg.clip_norm = cfg.clip_norm;
    Adam opt(params, opt_cfg);

    std::vector<Matrix> best_snapshot = snapshot_params(params);
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;
    long global_step = 0;

    std::vector<std::size_t> order(split.train.size());
    std::iota(order.begin(), order.end(), 0);

    try {
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            order_rng.shuffle(order);
            double train_loss_sum = 0.0;
            long batches = 0;
            for (std::size_t start = 0; start < order.size();
                 start += static_cast<std::size_t>(cfg.batch_size)) {
                const std::size_t stop =
                    std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
                std::vector<SurvivalRecord> chunk;
                chunk.reserve(stop - start);
                for (std::size_t i = start; i < stop; ++i) chunk.push_back(split.train[order[i]]);
                Batch batch = Batch::from_records(chunk);

                if (cfg.model == ModelKind::vdsm_cat && cfg.tau_anneal)
                    run.bundle.cat()->set_tau(
                        std::max(0.5, std::exp(-3e-5 * static_cast<double>(global_step))));

                Matrix noise = make_vae_noise(cfg, noise_rng, batch.size());
                Tape tape;
                Var loss = joint_loss_graph(tape, run.bundle, batch, cfg, noise);
                const double loss_val = tape.scalar_value(loss);
                if (!std::isfinite(loss_val))
                    throw TrainingDivergence("non-finite joint loss at epoch " +
                                             std::to_string(epoch));
                train_loss_sum += loss_val;
                ++batches;
                tape.backward(loss);
                opt.step();
                ++global_step;
            }

            const double train_loss = train_loss_sum / static_cast<double>(std::max(1L, batches));
            double val_loss = eval_joint_loss(run.bundle, split.val, cfg, val_noise_rng);
            if (std::isnan(val_loss)) val_loss = train_loss;  // no validation split
            run.loss_curve.push_back({train_loss, val_loss});

            if (val_loss < best_val) {
                best_val = val_loss;
                best_snapshot = snapshot_params(params);
                run.best_epoch = epoch;
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                break;
            }
        }
    } catch (const TrainingDivergence&) {
        run.diverged = true;
    }

    restore_params(params, best_snapshot);
    return run;
}

EvalReport evaluate(std::vector<ModelBundle>& bundles, const LoadedDataset& data,
                    const ExperimentConfig& cfg, SplitChoice which) {
    std::vector<double> all_times;
    std::vector<int> all_events;
    for (const auto& r : data.records) {
        all_times.push_back(r.u);
        all_events.push_back(r.delta);
    }
    const auto horizons = event_quantiles(all_times, all_events);

    EvalReport report;
    report.quantiles = {0.25, 0.5, 0.75};
    report.horizons = {horizons[0], horizons[1], horizons[2]};
    report.ctd.resize(static_cast<Eigen::Index>(bundles.size()), 3);
    report.auc.resize(static_cast<Eigen::Index>(bundles.size()), 3);

    for (std::size_t b = 0; b < bundles.size(); ++b) {
        DatasetSplit split = split_standardize(data.records, cfg.split_ratios, bundles[b].seed());
        const std::vector<SurvivalRecord>* records = &split.test;
        if (which == SplitChoice::train) records = &split.train;
        if (which == SplitChoice::val) records = &split.val;
        if (records->empty()) throw std::invalid_argument("evaluate: empty split");

        std::vector<double> times;
        std::vector<int> events;
        times.reserve(records->size());
        for (const auto& r : *records) {
            times.push_back(r.u);
            events.push_back(r.delta);
        }
        for (int h = 0; h < 3; ++h) {
            std::vector<double> risks;
            risks.reserve(records->size());
            for (const auto& r : *records)
                risks.push_back(bundles[b].risk(r.x, horizons[static_cast<std::size_t>(h)]));
            report.ctd(static_cast<Eigen::Index>(b), h) =
                concordance_td(risks, times, events, horizons[static_cast<std::size_t>(h)]);
            report.auc(static_cast<Eigen::Index>(b), h) =
                cumulative_dynamic_auc(risks, times, events, horizons[static_cast<std::size_t>(h)]);
        }
    }
    return report;
}

std::string export_latent(ModelBundle& bundle, const LoadedDataset& data,
                          const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("export_latent: cannot open '" + path + "'");
    const int K = bundle.k();
    out << "id,cluster";
    for (int k = 0; k < K; ++k) out << ",p" << k;
    const bool with_embedding = bundle.kind() == ModelKind::vdsm_clus;
    const int d_z = with_embedding ? bundle.clus()->latent_dim() : 0;
    for (int j = 0; j < d_z; ++j) out << ",z" << j;
    out << "\n";

    for (std::size_t i = 0; i < data.records.size(); ++i) {
        const Vector x = bundle.transform().apply(data.records[i].x);
        const Vector post = bundle.gate_vector(x);
        Eigen::Index arg;
        post.maxCoeff(&arg);
        out << i << "," << arg;
        for (int k = 0; k < K; ++k) out << "," << format_double(post(k));
        if (with_embedding) {
            const Matrix mean = bundle.clus()->encode_mean(Matrix(x.transpose()));
            for (int j = 0; j < d_z; ++j) out << "," << format_double(mean(0, j));
        }
        out << "\n";
    }
    return path;
}

RunArtifact train(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    std::filesystem::create_directories(cfg.out_dir);

    RunArtifact artifact;
    artifact.config_text = cfg.canonical_text();

    DataWithLabels data = load_dataset(cfg);

    std::vector<ModelBundle> bundles;
    json meta;
    meta["best_epochs"] = json::array();
    for (std::uint64_t seed : cfg.seeds) {
        SingleRun run = train_single(cfg, seed, data.data);
        artifact.diverged = artifact.diverged || run.diverged;
        meta["best_epochs"].push_back(run.best_epoch);

        const std::string ck_path =
            cfg.out_dir + "/checkpoint_s" + std::to_string(seed) + kCheckpointExt;
        run.bundle.save(ck_path, artifact.config_text);
        artifact.checkpoint_paths.push_back(ck_path);

        const std::string losses_path =
            cfg.out_dir + "/losses_s" + std::to_string(seed) + ".csv";
        std::ofstream lf(losses_path);
        lf << "epoch,train,val\n";
        for (std::size_t e = 0; e < run.loss_curve.size(); ++e)
            lf << e << "," << format_double(run.loss_curve[e][0]) << ","
               << format_double(run.loss_curve[e][1]) << "\n";
        artifact.losses_paths.push_back(losses_path);

        bundles.push_back(std::move(run.bundle));
    }

    artifact.report = evaluate(bundles, data.data, cfg, SplitChoice::test);

    artifact.report_csv_path = cfg.out_dir + "/report.csv";
    std::ofstream(artifact.report_csv_path) << artifact.report.to_csv();
    artifact.report_txt_path = cfg.out_dir + "/report.txt";
    std::ofstream(artifact.report_txt_path)
        << artifact.report.to_table_text(model_kind_name(cfg.model));

    artifact.latent_path = export_latent(bundles.front(), data.data, cfg.out_dir + "/latent.csv");

    artifact.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    meta["wall_seconds"] = artifact.wall_seconds;
    meta["diverged"] = artifact.diverged;
    std::ofstream(cfg.out_dir + "/meta.json") << meta.dump(1) << "\n";
    return artifact;
}

// ---------------------------------------------------------------------------
// grid search

GridResult grid_search(const ExperimentConfig& base,
                       const std::map<std::string, std::vector<json>>& grid, int threads) {
    std::vector<std::map<std::string, json>> assignments{{}};
    for (const auto& [key, values] : grid) {
        if (values.empty()) throw std::invalid_argument("grid: empty value list for " + key);
        std::vector<std::map<std::string, json>> next;
        for (const auto& partial : assignments)
            for (const auto& v : values) {
                auto a = partial;
                a[key] = v;
                next.push_back(std::move(a));
            }
        assignments = std::move(next);
    }

    std::vector<GridCell> cells(assignments.size());
    std::atomic<std::size_t> cursor{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= assignments.size()) return;
            GridCell& cell = cells[i];
            cell.assignment = assignments[i];
            try {
                json j = base.to_json();
                for (const auto& [key, v] : assignments[i]) {
                    std::string path = key;
                    for (char& c : path)
                        if (c == '.') c = '/';
                    j[json::json_pointer("/" + path)] = v;
                }
                ExperimentConfig cfg = ExperimentConfig::from_json(j);
                cell.config_text = cfg.canonical_text();

                DataWithLabels data = load_dataset(cfg);
                std::vector<ModelBundle> bundles;
                for (std::uint64_t seed : cfg.seeds) {
                    SingleRun run = train_single(cfg, seed, data.data);
                    if (run.diverged) throw TrainingDivergence("cell diverged");
                    bundles.push_back(std::move(run.bundle));
                }
                EvalReport rep = evaluate(bundles, data.data, cfg, SplitChoice::val);
                cell.score = rep.mean(rep.ctd, 1);  // 50% horizon
            } catch (const std::exception& e) {
                cell.failed = true;
                cell.error = e.what();
            }
        }
    };

    const int n_threads = std::max(1, threads);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    GridResult result;
    result.ranked = std::move(cells);
    std::sort(result.ranked.begin(), result.ranked.end(), [](const GridCell& a, const GridCell& b) {
        if (a.failed != b.failed) return !a.failed;
        if (a.failed) return a.config_text < b.config_text;
        if (a.score != b.score) return a.score > b.score;
        return a.config_text < b.config_text;
    });
    if (result.ranked.empty() || result.ranked.front().failed)
        throw std::runtime_error("grid_search: every cell failed");
    result.best = ExperimentConfig::from_json(json::parse(result.ranked.front().config_text));
    return result;
}

std::string grid_to_csv(const GridResult& result) {
    std::string out = "rank,score,failed,assignment\n";
    for (std::size_t i = 0; i < result.ranked.size(); ++i) {
        const GridCell& c = result.ranked[i];
        std::string assignment;
        for (const auto& [k, v] : c.assignment) {
            if (!assignment.empty()) assignment += ";";
            assignment += k + "=" + v.dump();
        }
        out += std::to_string(i + 1) + ",";
        out += (c.failed ? std::string("") : format_double(c.score)) + ",";
        out += (c.failed ? "1" : "0") + std::string(",");
        out += assignment + "\n";
    }
    return out;
}

}  // namespace vdsm
