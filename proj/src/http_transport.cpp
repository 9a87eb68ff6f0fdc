#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "mammqa/backends.hpp"

namespace mammqa::detail {

// Splits "https://host:port/base" into origin and path prefix.
static std::pair<std::string, std::string> split_url(const std::string& url) {
  size_t scheme_end = url.find("://");
  size_t path_start =
      scheme_end == std::string::npos ? url.find('/') : url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  return {url.substr(0, path_start), url.substr(path_start)};
}

HttpResult httplib_post(const std::string& url, const std::string& body,
                        const std::string& api_key) {
  auto [origin, path] = split_url(url);
  httplib::Client client(origin);
  client.set_connection_timeout(30);
  client.set_read_timeout(300);
  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
  auto res = client.Post(path, headers, body, "application/json");
  if (!res) {
    HttpResult out;
    out.transport_error = true;
    out.error = httplib::to_string(res.error());
    return out;
  }
  return HttpResult{res->status, res->body, false, ""};
}

}  // namespace mammqa::detail
