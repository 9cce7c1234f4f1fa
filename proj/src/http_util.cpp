#include "http_util.hpp"

#include "distillrag/errors.hpp"

namespace distillrag::detail {

Endpoint parse_endpoint(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw Error(ErrorCode::InvalidArgument, "endpoint must include a scheme: " + std::string(url));
  }
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint ep;
  if (path_start == std::string_view::npos) {
    ep.origin = std::string(url);
    ep.path = "/";
  } else {
    ep.origin = std::string(url.substr(0, path_start));
    ep.path = std::string(url.substr(path_start));
  }
  return ep;
}

std::unique_ptr<httplib::Client> make_client(const Endpoint& ep, std::chrono::milliseconds timeout) {
  auto client = std::make_unique<httplib::Client>(ep.origin);
  if (!client->is_valid()) {
    throw Error(ErrorCode::InvalidArgument, "unsupported endpoint: " + ep.origin);
  }
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client->set_connection_timeout(secs.count(), usecs.count());
  client->set_read_timeout(secs.count(), usecs.count());
  client->set_write_timeout(secs.count(), usecs.count());
  return client;
}

std::string excerpt(std::string_view body, std::size_t max_len) {
  if (body.size() <= max_len) return std::string(body);
  return std::string(body.substr(0, max_len)) + "...";
}

}  // namespace distillrag::detail
