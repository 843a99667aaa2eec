#pragma once

#include <atomic>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "price/catalog.hpp"
#include "price/model.hpp"
#include "price/stats.hpp"

namespace price::cli {

inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitModel = 3;

/// Parses `args` (program name first) and runs one subcommand. Results go to
/// `out`, diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Line-protocol estimator over immutable model, catalog and statistics.
class EstimationService {
 public:
  EstimationService(Model model, Catalog catalog, StatsStore stats);

  /// One JSON response (without newline) for one request line.
  std::string handle(std::string_view line) const;

 private:
  Model model_;
  Catalog catalog_;
  StatsStore stats_;
};

/// Longest request line accepted; longer lines get an error response.
inline constexpr std::size_t kMaxRequestBytes = 1 << 20;

/// Answers every line of `in` on `out`, in order, until end of input.
void serve_stream(const EstimationService& service, std::istream& in, std::ostream& out);

/// Accepts TCP connections on `addr` ("host:port", port 0 picks a free one)
/// with one thread per connection until `stop` becomes true. `on_ready`
/// receives the bound port.
void serve_tcp(const EstimationService& service, const std::string& addr, const std::atomic<bool>& stop,
               const std::function<void(int)>& on_ready = {});

}  // namespace price::cli
