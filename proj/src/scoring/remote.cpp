#include <httplib.h>

#include <json.hpp>

#include "toxhmm/error.hpp"
#include "toxhmm/scoring.hpp"

namespace toxhmm {

using nlohmann::json;

RemoteBackend::RemoteBackend(RemoteConfig config) : config_(std::move(config)) {
  const auto& ep = config_.endpoint;
  const auto scheme_end = ep.find("://");
  if (scheme_end == std::string::npos) throw InputError("endpoint must start with http:// or https://");
  const std::string scheme = ep.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw InputError("unsupported endpoint scheme '" + scheme + "'");
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme == "https") throw InputError("this build has no TLS support; use an http:// endpoint");
#endif
  const auto path_start = ep.find('/', scheme_end + 3);
  url_.scheme_host_port = ep.substr(0, path_start);
  url_.path = path_start == std::string::npos ? "/" : ep.substr(path_start);
  if (url_.scheme_host_port.size() <= scheme_end + 3) throw InputError("endpoint has no host");
}

RemoteBackend::~RemoteBackend() = default;

BackendReply RemoteBackend::score(const ScoreRequest& request) {
  using Status = BackendReply::Status;
  BackendReply reply;
  // one client per call: httplib clients are not safe for concurrent use
  httplib::Client client(url_.scheme_host_port);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);
  if (!config_.api_key.empty()) client.set_bearer_token_auth(config_.api_key);

  const json body = {{"text", request.text}, {"attributes", request.attributes}};
  const auto res = client.Post(url_.path, body.dump(), "application/json");
  if (!res) {
    reply.status = Status::kTransient;
    reply.message = "request failed: " + httplib::to_string(res.error());
    return reply;
  }
  const int code = res->status;
  if (code == 401 || code == 403) {
    reply.status = Status::kAuthFailed;
    reply.message = "HTTP " + std::to_string(code);
    return reply;
  }
  if (code == 429 || code >= 500) {
    reply.status = Status::kTransient;
    reply.message = "HTTP " + std::to_string(code);
    return reply;
  }
  if (code < 200 || code >= 300) {
    reply.status = Status::kRejected;
    reply.message = "HTTP " + std::to_string(code) + ": " + res->body.substr(0, 200);
    return reply;
  }
  try {
    const json j = json::parse(res->body);
    for (const auto& attr : request.attributes) {
      const auto it = j.find(attr);
      if (it == j.end() || !it->is_number()) throw InputError("response lacks a score for '" + attr + "'");
      const double s = it->get<double>();
      if (!(s >= 0.0 && s <= 1.0)) throw InputError("score for '" + attr + "' outside [0,1]");
      reply.scores[attr] = s;
    }
  } catch (const std::exception& e) {
    reply.status = Status::kRejected;
    reply.scores.clear();
    reply.message = std::string("malformed response: ") + e.what();
  }
  return reply;
}

}  // namespace toxhmm
