#pragma once

#include <filesystem>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "socnn/config.hpp"
#include "socnn/data.hpp"
#include "socnn/models.hpp"
#include "socnn/train.hpp"

namespace socnn::cli {

struct SynthDataset {
  SynthSpec spec;
  FeatureSet train;
  FeatureSet test;
};

SynthSpec synth_spec_from_config(const RunConfig& cfg);
SynthDataset generate_synth_dataset(const RunConfig& cfg);
void save_synth_dataset(const std::filesystem::path& file, const SynthDataset& data);
SynthDataset load_synth_dataset(const std::filesystem::path& file);

/// Input geometry a model must accept.
struct InputInfo {
  bool images = false;
  std::size_t sites = 0;     ///< synthetic only
  std::size_t features = 0;  ///< synthetic only
  std::size_t classes = 0;
};

template <typename T>
struct DataSplits {
  std::unique_ptr<DataSource<T>> train, val, test;
  InputInfo info;
};

template <typename T>
DataSplits<T> load_data(const RunConfig& cfg);

ModelSpec model_from_config(const RunConfig& cfg, const InputInfo& info);
TrainOptions train_options_from_config(const RunConfig& cfg);

inline constexpr const char* kMetricsHeader = "epoch,train_loss,val_loss,val_acc,lr,wall_seconds";
std::string metrics_row(const EpochRecord& rec);

int cmd_train(const RunConfig& cfg, std::ostream& out);
int cmd_eval(const RunConfig& cfg, std::ostream& out);
int cmd_count_params(const RunConfig& cfg, const std::vector<std::string>& names,
                     std::ostream& out);
int cmd_gen_synth(const RunConfig& cfg, const std::filesystem::path& file, std::ostream& out);

}  // namespace socnn::cli
