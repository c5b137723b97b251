#pragma once

#include <string>
#include <string_view>

namespace ctxuse {

struct UrlParts {
    std::string scheme;  // lower-case; empty when the input had none
    std::string host;    // lower-case, no port
    int port = 0;        // 0 when absent
    std::string path;    // starts with '/', includes query string
};

/// Accepts "scheme://host[:port]/path" and bare "host/path". Throws MalformedUrl.
UrlParts parse_url(std::string_view url);

/// "scheme://host[:port]" suitable as an HTTP client base.
std::string origin(const UrlParts& parts);

/// Host without "www." reduced to its registrable domain, e.g.
/// "https://news.bbc.co.uk:443/x" -> "bbc.co.uk".
std::string registered_domain(std::string_view url);

}  // namespace ctxuse
