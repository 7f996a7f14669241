#include "fedclean/fedcore.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace fedclean::fedcore {

void write_round_log_csv(const std::filesystem::path& path, const std::vector<RoundLog>& logs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw FedError("cannot write " + path.string());
  }
  out << std::setprecision(10);
  out << "round,client_id,loss,g_loss,d_loss,val_accuracy,best_accuracy,wait\n";
  auto cell = [](const std::vector<double>& v, std::size_t k) {
    std::ostringstream s;
    s << std::setprecision(10);
    if (k < v.size()) {
      s << v[k];
    }
    return s.str();
  };
  for (const auto& log : logs) {
    for (std::size_t k = 0; k < log.client_ids.size(); ++k) {
      out << log.round << ',' << log.client_ids[k] << ',' << cell(log.client_loss, k) << ','
          << cell(log.client_g_loss, k) << ',' << cell(log.client_d_loss, k) << ','
          << log.val_accuracy << ',' << log.best_accuracy << ',' << log.wait << '\n';
    }
  }
}

}  // namespace fedclean::fedcore
