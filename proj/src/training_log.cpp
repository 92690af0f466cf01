#include "cas/training_log.hpp"

#include "cas/binary_io.hpp"

#include <json.hpp>

#include <cmath>

namespace cas {

namespace {
nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }
}  // namespace

void write_pretrain_log(const std::filesystem::path& path, const std::vector<EpochRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::json j = {{"epoch", r.epoch},
                        {"kl", number_or_null(r.kl)},
                        {"reconstruction", number_or_null(r.reconstruction)},
                        {"total", number_or_null(r.total)},
                        {"churn", number_or_null(r.churn)}};
    out += j.dump() + "\n";
  }
  write_bytes(path, out);
}

void write_loss_log(const std::filesystem::path& path, const std::vector<double>& epoch_losses) {
  std::string out;
  for (size_t e = 0; e < epoch_losses.size(); ++e) {
    out += nlohmann::json{{"epoch", e}, {"loss", number_or_null(epoch_losses[e])}}.dump() + "\n";
  }
  write_bytes(path, out);
}

}  // namespace cas
