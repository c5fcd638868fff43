#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "kforge/agents.hpp"

namespace kforge {

namespace {

class HttplibTransport : public HttpTransport {
public:
    HttpResponse post(const std::string& url,
                      const std::vector<std::pair<std::string, std::string>>& headers,
                      const std::string& body, std::chrono::milliseconds timeout) override {
        const auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos) {
            throw ConfigError("endpoint must be an absolute URL: " + url);
        }
        const auto path_start = url.find('/', scheme_end + 3);
        const auto origin = url.substr(0, path_start);
        const auto path = path_start == std::string::npos ? std::string("/") : url.substr(path_start);

        httplib::Client client(origin);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout).count();
        client.set_connection_timeout(std::max<long long>(1, std::min<long long>(secs, 30)), 0);
        client.set_read_timeout(std::max<long long>(1, secs), 0);
        client.set_write_timeout(std::max<long long>(1, secs), 0);

        httplib::Headers h;
        std::string content_type = "application/json";
        for (const auto& [k, v] : headers) {
            if (k == "Content-Type") {
                content_type = v;
            } else {
                h.emplace(k, v);
            }
        }
        auto res = client.Post(path, h, body, content_type);
        if (!res) {
            throw BackendError("transport error: " + httplib::to_string(res.error()));
        }
        return {res->status, res->body};
    }
};

} // namespace

std::unique_ptr<HttpTransport> make_https_transport() { return std::make_unique<HttplibTransport>(); }

} // namespace kforge
