#pragma once

#include "sbo/attack.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace sbo {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kReportSchema = 1;

struct LabeledImage {
  ImageTensor image;
  Label label = 0;
};

struct Dataset {
  Shape shape;
  int num_classes = 0;
  std::vector<LabeledImage> items;
};

/// Dataset file: magic "SBD1", little-endian uint32 count, C, H, W, K, then
/// count*C*H*W float32 pixels and count uint16 labels.
Dataset load_dataset(const std::filesystem::path& path,
                     std::optional<Shape> expected_shape = std::nullopt);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);

/// Creates one classifier per worker (each worker owns its connection).
using ClassifierFactory = std::function<std::unique_ptr<Classifier>()>;

/// "file:<path>" / "<path>" for a built-in weight file, "tcp:host:port" for a remote server.
ClassifierFactory make_classifier_factory(const std::string& oracle_spec);

enum class AttackMethod { Bayes, RandomSearch };

struct Campaign {
  std::filesystem::path dataset_path;
  std::string oracle_spec;
  AttackConfig config;
  AttackMethod method = AttackMethod::Bayes;
  /// Attack the first `image_count` dataset items (0 = all).
  std::int64_t image_count = 0;
  /// Per-image seeds derive from config.seed and the image index.
  std::filesystem::path output_path;
  std::filesystem::path trace_dir;
  int workers = 1;
  /// Targeted campaign with a per-image target drawn uniformly from the
  /// other classes (seeded by the image seed). Overrides config.objective.target.
  bool random_targets = false;
};

enum class ImageStatus { Attacked, Misclassified, Errored };

std::string_view to_string(ImageStatus s);

struct ImageSummary {
  std::int64_t index = 0;
  Label label = 0;
  std::uint64_t seed = 0;
  ImageStatus status = ImageStatus::Attacked;
  bool success = false;
  std::int64_t queries_used = 0;
  std::optional<Label> adversarial_label;
  std::optional<Label> target;
  std::int64_t gp_rows = 0;
  double perturbation_linf = 0.0;
  double perturbation_l2 = 0.0;
  double final_value = 0.0;
  std::string error;
};

struct CampaignReport {
  int schema = kReportSchema;
  std::string version = kVersion;
  std::vector<ImageSummary> images;
  std::int64_t attacked = 0;
  std::int64_t successes = 0;
  std::int64_t errored = 0;
  double success_rate = 0.0;
  double avg_queries_on_success = 0.0;
  double median_queries_on_success = 0.0;
  /// No image was attacked (all misclassified or errored).
  bool degenerate = false;
  /// Basis mode and norm are not the usual pairing (NNI+Linf, FFT+L2).
  bool cross_mode = false;
  nlohmann::json config;
  double wall_clock_seconds = 0.0;
};

/// Seed for image `index`, unique per index.
std::uint64_t image_seed(std::uint64_t base, std::int64_t index);

/// Fills the aggregate fields from `images`.
void aggregate(CampaignReport& report);

nlohmann::json config_to_json(const AttackConfig& config);
AttackConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CampaignReport& report);
CampaignReport report_from_json(const nlohmann::json& j);
/// Per-image results only; stable across runs with the same seeds.
nlohmann::json images_to_json(const std::vector<ImageSummary>& images);

/// Attacks every image (in parallel across workers). Writes the report and
/// optional per-image trace CSVs when the corresponding paths are set.
CampaignReport run_campaign(const Campaign& campaign);
/// Same, with an in-memory dataset and classifier factory.
CampaignReport run_campaign(const Campaign& campaign, const Dataset& dataset,
                            const ClassifierFactory& factory);

/// Writes "query_index,objective_value,cumulative_best" rows.
void write_trace_csv(const std::filesystem::path& path, const std::vector<TracePoint>& trace);

/// Fields an ablation may change; everything else (dataset, seeds) is shared.
struct ConfigOverride {
  std::optional<BasisMode> basis_mode;
  std::optional<int> low_dim_side;
  std::optional<NormKind> norm;
  std::optional<double> eps;
  std::optional<AcquisitionKind> acquisition;

  [[nodiscard]] AttackConfig apply(const AttackConfig& base) const;
  /// "basis=FFT_Cos,rd=8,norm=L2,eps=0.5,acq=EI"
  static ConfigOverride parse(const std::string& text);
  [[nodiscard]] nlohmann::json to_json() const;
};

std::vector<CampaignReport> run_ablation(const Campaign& base, const std::vector<ConfigOverride>& sweep,
                                         const Dataset& dataset, const ClassifierFactory& factory);
std::vector<CampaignReport> run_ablation(const Campaign& base, const std::vector<ConfigOverride>& sweep);

}  // namespace sbo
