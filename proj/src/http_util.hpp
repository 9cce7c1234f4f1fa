#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <string_view>

#include <httplib.h>

namespace distillrag::detail {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // always starts with '/'
};

/// Splits "http://host:port/v1/chat" into origin and path.
Endpoint parse_endpoint(std::string_view url);

std::unique_ptr<httplib::Client> make_client(const Endpoint& ep, std::chrono::milliseconds timeout);

std::string excerpt(std::string_view body, std::size_t max_len = 200);

}  // namespace distillrag::detail
