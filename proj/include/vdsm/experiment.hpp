#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vdsm/dataset.hpp"
#include "vdsm/mixture.hpp"
#include "vdsm/survival_metrics.hpp"
#include "vdsm/vae_cat.hpp"
#include "vdsm/vae_clus.hpp"

namespace vdsm {

enum class ModelKind { dsm, vdsm_cat, vdsm_clus };
enum class DatasetKind { support, flchain, synthetic };

std::string model_kind_name(ModelKind m);
ModelKind model_kind_from_name(const std::string& name);
std::string dataset_kind_name(DatasetKind d);
DatasetKind dataset_kind_from_name(const std::string& name);

struct ExperimentConfig {
    ModelKind model = ModelKind::dsm;
    DatasetKind dataset = DatasetKind::synthetic;

    int k = 4;
    PrimitiveFamily family = PrimitiveFamily::weibull;
    double discount = 0.5;
    double lr = 1e-4;
    int epochs = 100;
    int batch_size = 128;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    ElboMode elbo_mode = ElboMode::jensen_bound;

    std::vector<Eigen::Index> hidden_dims{100};
    Activation activation = Activation::tanh;
    bool shift_head = false;
    double clip_norm = 10.0;
    int patience = 10;

    // categorical front-end
    double tau = 1.0;
    bool tau_anneal = false;
    int cat_latent_dims = 1;

    // clustering front-end
    int d_z = 8;
    int warmup_epochs = 10;
    double warmup_lr = 1e-3;
    double sigma_x = 1.0;
    int elbo_samples = 1;  // MC draws per front-end loss evaluation

    std::string data_path;
    int synthetic_n = 6000;
    std::uint64_t synthetic_seed = 12345;
    SyntheticSpec synthetic = default_synthetic_spec();
    std::array<double, 3> split_ratios{0.7, 0.1, 0.2};
    std::string out_dir = ".";

    void validate() const;  // throws std::invalid_argument
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j, bool validate = true);
    static ExperimentConfig from_file(const std::string& path);
    std::string canonical_text() const;
    // --set key=value override; dotted keys address nested fields
    void apply_override(const std::string& assignment);
};

// A trained model for one seed: the mixture plus the front-end that supplies
// its gate, and the train-fitted feature transform.
class ModelBundle {
public:
    static ModelBundle create(const ExperimentConfig& cfg, std::uint64_t seed,
                              Eigen::Index input_dim, RngStream& rng);

    ModelKind kind() const { return kind_; }
    std::uint64_t seed() const { return seed_; }
    int k() const { return mixture_->k(); }

    MixtureModel& mixture() { return *mixture_; }
    const MixtureModel& mixture() const { return *mixture_; }
    std::optional<CatVae>& cat() { return cat_; }
    std::optional<ClusVae>& clus() { return clus_; }
    const std::optional<CatVae>& cat() const { return cat_; }
    const std::optional<ClusVae>& clus() const { return clus_; }
    Standardizer& transform() { return transform_; }
    const Standardizer& transform() const { return transform_; }

    std::vector<ParamTensor*> parameters();

    // standardized-covariate gate over the K mixture components
    Vector gate_vector(const Vector& x_std) const;
    Matrix gate_matrix(const Matrix& x_std) const;
    double risk(const Vector& x_std, double horizon) const;

    Var gate_log_probs_graph(Tape& tape, Var x);

    void save(const std::string& path, const std::string& config_text) const;
    static ModelBundle load(const std::string& path);

private:
    ModelBundle() = default;
    ModelKind kind_ = ModelKind::dsm;
    std::uint64_t seed_ = 0;
    std::optional<MixtureModel> mixture_;
    std::optional<CatVae> cat_;
    std::optional<ClusVae> clus_;
    Standardizer transform_;
};

// Joint loss: the mixture likelihood term gated by the configured front-end
// plus the front-end's own loss. vae_noise carries cfg.elbo_samples stacked
// draws: gumbel noise (samples*n x n_dims*k) for vdsm_cat, standard normal
// (samples*n x d_z) for vdsm_clus, ignored for dsm.
Var joint_loss_graph(Tape& tape, ModelBundle& bundle, const Batch& batch,
                     const ExperimentConfig& cfg, const Matrix& vae_noise);
Var dsm_part_loss_graph(Tape& tape, ModelBundle& bundle, const Batch& batch,
                        const ExperimentConfig& cfg);
Matrix make_vae_noise(const ExperimentConfig& cfg, RngStream& rng, Eigen::Index n);

struct SingleRun {
    ModelBundle bundle;
    std::vector<std::array<double, 2>> loss_curve;  // per epoch: train, val
    int best_epoch = -1;
    bool diverged = false;
};

struct DataWithLabels {
    LoadedDataset data;
    std::vector<int> labels;  // generator truth; empty for file datasets
};

DataWithLabels load_dataset(const ExperimentConfig& cfg);

SingleRun train_single(const ExperimentConfig& cfg, std::uint64_t seed,
                       const LoadedDataset& data);

enum class SplitChoice { train, val, test };

EvalReport evaluate(std::vector<ModelBundle>& bundles, const LoadedDataset& data,
                    const ExperimentConfig& cfg, SplitChoice which);

struct RunArtifact {
    std::string config_text;
    std::vector<std::string> checkpoint_paths;
    std::vector<std::string> losses_paths;
    std::string report_csv_path;
    std::string report_txt_path;
    std::string latent_path;
    EvalReport report;
    double wall_seconds = 0.0;
    bool diverged = false;
};

// Full pipeline: trains every seed, evaluates the test split, exports the
// latent assignment of the first seed, and writes report/checkpoint/loss
// files under cfg.out_dir.
RunArtifact train(const ExperimentConfig& cfg);

// Latent export for one bundle over a full dataset; returns the path.
std::string export_latent(ModelBundle& bundle, const LoadedDataset& data,
                          const std::string& path);

struct GridCell {
    std::string config_text;
    std::map<std::string, nlohmann::json> assignment;
    double score = std::numeric_limits<double>::quiet_NaN();  // val mean C^td @ 50%
    bool failed = false;
    std::string error;
};

struct GridResult {
    std::vector<GridCell> ranked;  // best first
    ExperimentConfig best;
};

// Cartesian product over the value lists; each cell trains and is ranked by
// validation mean concordance at the 50% horizon. Cell failures are recorded
// and the search continues. Results do not depend on enumeration order.
GridResult grid_search(const ExperimentConfig& base,
                       const std::map<std::string, std::vector<nlohmann::json>>& grid,
                       int threads = 1);

std::string grid_to_csv(const GridResult& result);

}  // namespace vdsm
