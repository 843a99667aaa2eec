#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cli.hpp"
#include "price/featurizer.hpp"
#include "price/query.hpp"

namespace price::cli {

EstimationService::EstimationService(Model model, Catalog catalog, StatsStore stats)
    : model_(std::move(model)), catalog_(std::move(catalog)), stats_(std::move(stats)) {
  stats_.check_compatible(catalog_);
}

std::string EstimationService::handle(std::string_view line) const {
  nlohmann::json request;
  try {
    request = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    return nlohmann::json{{"id", nullptr}, {"error", "parse"}}.dump();
  }
  nlohmann::json response{{"id", request.is_object() && request.contains("id") ? request["id"] : nlohmann::json()}};
  if (!request.is_object() || !request.contains("sql") || !request["sql"].is_string()) {
    response["error"] = "request needs a string field 'sql'";
    return response.dump();
  }
  try {
    const auto query = parse_query(request["sql"].get<std::string>(), catalog_);
    const double log_card = model_.predict_log_card(featurize(query, catalog_, stats_));
    response["card"] = std::max(1.0, std::exp(log_card));
    response["log_card"] = log_card;
  } catch (const std::exception& e) {
    response["error"] = e.what();
  }
  return response.dump();
}

void serve_stream(const EstimationService& service, std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out << (line.size() > kMaxRequestBytes ? nlohmann::json{{"id", nullptr}, {"error", "request too long"}}.dump()
                                           : service.handle(line))
        << '\n'
        << std::flush;
  }
}

namespace {

bool send_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const auto n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

void handle_connection(const EstimationService& service, int fd, const std::atomic<bool>& stop, std::atomic<int>& active) {
  std::string pending;
  bool discarding = false;  // inside an oversized line
  char buffer[65536];
  while (!stop) {
    pollfd p{fd, POLLIN, 0};
    const int ready = ::poll(&p, 1, 200);
    if (ready == 0) continue;
    if (ready < 0 && errno == EINTR) continue;
    const auto n = ready < 0 ? -1 : ::recv(fd, buffer, sizeof buffer, 0);
    if (n <= 0) break;
    pending.append(buffer, static_cast<std::size_t>(n));
    std::string replies;
    std::size_t start = 0;
    for (auto nl = pending.find('\n', start); nl != std::string::npos; nl = pending.find('\n', start)) {
      std::string_view line(pending.data() + start, nl - start);
      start = nl + 1;
      if (discarding) {
        discarding = false;
        continue;
      }
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (line.empty()) continue;
      replies += service.handle(line);
      replies += '\n';
    }
    pending.erase(0, start);
    if (pending.size() > kMaxRequestBytes) {
      if (!discarding) replies += nlohmann::json{{"id", nullptr}, {"error", "request too long"}}.dump() + "\n";
      discarding = true;
      pending.clear();
    }
    if (!replies.empty() && !send_all(fd, replies)) break;
  }
  ::close(fd);
  --active;
}

}  // namespace

void serve_tcp(const EstimationService& service, const std::string& addr, const std::atomic<bool>& stop,
               const std::function<void(int)>& on_ready) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("address must be host:port, got '" + addr + "'");
  const auto host = addr.substr(0, colon);
  const auto port = addr.substr(colon + 1);

  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* info = nullptr;
  if (const int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), port.c_str(), &hints, &info); rc != 0) {
    throw std::runtime_error("cannot resolve " + addr + ": " + ::gai_strerror(rc));
  }
  const int listener = ::socket(info->ai_family, info->ai_socktype, info->ai_protocol);
  const int yes = 1;
  ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  if (listener < 0 || ::bind(listener, info->ai_addr, info->ai_addrlen) != 0 || ::listen(listener, 64) != 0) {
    const std::string reason = std::strerror(errno);
    ::freeaddrinfo(info);
    if (listener >= 0) ::close(listener);
    throw std::runtime_error("cannot listen on " + addr + ": " + reason);
  }
  ::freeaddrinfo(info);

  sockaddr_in bound{};
  socklen_t length = sizeof bound;
  ::getsockname(listener, reinterpret_cast<sockaddr*>(&bound), &length);
  const int bound_port = ntohs(bound.sin_port);
  spdlog::info("serving on port {}", bound_port);
  if (on_ready) on_ready(bound_port);

  // Connection threads are detached and counted so finished ones release
  // their resources immediately; shutdown waits for the count to drain.
  std::atomic<int> active{0};
  while (!stop) {
    pollfd p{listener, POLLIN, 0};
    if (::poll(&p, 1, 200) <= 0) continue;
    const int fd = ::accept(listener, nullptr, nullptr);
    if (fd < 0) continue;
    spdlog::debug("connection accepted");
    ++active;
    std::thread(handle_connection, std::cref(service), fd, std::cref(stop), std::ref(active)).detach();
  }
  ::close(listener);
  while (active > 0) std::this_thread::sleep_for(std::chrono::milliseconds(10));
}

}  // namespace price::cli
