#pragma once

#include <filesystem>
#include <limits>
#include <vector>

namespace cas {

/// One epoch of pretraining. Terms that were not computed are NaN and are
/// written as JSON null.
struct EpochRecord {
  int epoch = 0;
  double kl = std::numeric_limits<double>::quiet_NaN();
  double reconstruction = std::numeric_limits<double>::quiet_NaN();
  double total = std::numeric_limits<double>::quiet_NaN();
  double churn = std::numeric_limits<double>::quiet_NaN();
};

/// JSON-lines: one object per epoch.
void write_pretrain_log(const std::filesystem::path& path, const std::vector<EpochRecord>& records);
void write_loss_log(const std::filesystem::path& path, const std::vector<double>& epoch_losses);

}  // namespace cas
