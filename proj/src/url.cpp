#include "ctxuse/url.hpp"

#include <algorithm>
#include <array>
#include <charconv>

#include "ctxuse/errors.hpp"
#include "ctxuse/text.hpp"

namespace ctxuse {

namespace {

// Second-level labels under which registrations happen one level deeper.
// Not the full public-suffix list; enough for the news and fact-checking
// domains this tool meets.
constexpr std::array<std::string_view, 14> kSecondLevel{
    "co.uk", "org.uk", "ac.uk", "gov.uk", "com.au", "net.au", "org.au",
    "co.in", "co.nz", "com.br", "co.za", "com.sg", "co.jp",  "com.lk",
};

bool valid_host(std::string_view host) {
    if (host.empty() || host.front() == '.' || host.back() == '.') return false;
    if (host.find("..") != std::string_view::npos) return false;
    return std::all_of(host.begin(), host.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '-' || c == '.' || c >= 0x80;
    });
}

}  // namespace

UrlParts parse_url(std::string_view url) {
    const auto trimmed = text::normalize_whitespace(url);
    if (trimmed.empty() || trimmed.find(' ') != std::string::npos) {
        throw MalformedUrl("malformed URL '" + std::string(url) + "'");
    }
    std::string_view rest = trimmed;
    UrlParts parts;
    if (auto sep = rest.find("://"); sep != std::string_view::npos) {
        parts.scheme = text::to_lower_ascii(rest.substr(0, sep));
        if (parts.scheme.empty() ||
            !std::all_of(parts.scheme.begin(), parts.scheme.end(),
                         [](unsigned char c) { return std::isalnum(c) || c == '+' || c == '-' || c == '.'; })) {
            throw MalformedUrl("malformed URL scheme in '" + std::string(url) + "'");
        }
        rest.remove_prefix(sep + 3);
    }
    const auto path_at = rest.find_first_of("/?#");
    std::string_view authority = rest.substr(0, path_at);
    parts.path = path_at == std::string_view::npos ? "/" : std::string(rest.substr(path_at));
    if (!parts.path.empty() && parts.path.front() != '/') parts.path.insert(0, "/");

    if (auto at = authority.rfind('@'); at != std::string_view::npos) authority.remove_prefix(at + 1);
    if (auto colon = authority.rfind(':'); colon != std::string_view::npos) {
        const auto port_text = authority.substr(colon + 1);
        int port = 0;
        auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
        if (ec != std::errc() || ptr != port_text.data() + port_text.size() || port <= 0 || port > 65535) {
            throw MalformedUrl("malformed port in '" + std::string(url) + "'");
        }
        parts.port = port;
        authority = authority.substr(0, colon);
    }
    parts.host = text::to_lower_ascii(authority);
    if (!valid_host(parts.host)) throw MalformedUrl("malformed host in '" + std::string(url) + "'");
    return parts;
}

std::string origin(const UrlParts& parts) {
    std::string out = (parts.scheme.empty() ? std::string("http") : parts.scheme) + "://" + parts.host;
    if (parts.port) out += ":" + std::to_string(parts.port);
    return out;
}

std::string registered_domain(std::string_view url) {
    std::string host = parse_url(url).host;
    if (host.rfind("www.", 0) == 0) host.erase(0, 4);
    if (host.find('.') == std::string::npos) throw MalformedUrl("no domain in '" + std::string(url) + "'");

    std::vector<std::string_view> labels;
    std::string_view h = host;
    while (true) {
        auto dot = h.find('.');
        labels.push_back(h.substr(0, dot));
        if (dot == std::string_view::npos) break;
        h.remove_prefix(dot + 1);
    }
    std::size_t keep = 2;
    if (labels.size() >= 3) {
        const std::string tail = std::string(labels[labels.size() - 2]) + "." + std::string(labels.back());
        if (std::find(kSecondLevel.begin(), kSecondLevel.end(), tail) != kSecondLevel.end()) keep = 3;
    }
    keep = std::min(keep, labels.size());
    std::string out;
    for (std::size_t i = labels.size() - keep; i < labels.size(); ++i) {
        if (!out.empty()) out += '.';
        out += labels[i];
    }
    return out;
}

}  // namespace ctxuse
