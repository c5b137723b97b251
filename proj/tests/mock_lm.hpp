#pragma once

#include <atomic>
#include <cmath>
#include <string>
#include <thread>

#include "ctxuse/model.hpp"

// After Eigen: <resolv.h> defines _res as a macro.
#include <httplib.h>

namespace testing {

/// Loopback completions server whose answer distribution depends only on the
/// prompt, so scores vary across samples but are reproducible. Counts every
/// request it receives.
class MockLmServer {
public:
    std::atomic<int> requests{0};

    MockLmServer() {
        server_.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
            ++requests;
            const auto body = ctxuse::Json::parse(req.body);
            const auto prompt = body.at("prompt").get<std::string>();
            ctxuse::Json reply;
            if (body.value("echo", false)) {
                reply = {{"choices", {{{"logprobs", {{"token_logprobs", {nullptr, -1.0, -2.5, -0.5}}}}}}}};
            } else {
                reply = {{"choices", {{{"logprobs", {{"top_logprobs", {top_for(prompt)}}}}}}}};
            }
            res.set_content(reply.dump(), "application/json");
        });
        server_.Post("/v1/chat/completions", [this](const httplib::Request&, httplib::Response& res) {
            ++requests;
            res.set_content(R"({"choices": [{"message": {"content": "No."}}]})", "application/json");
        });
        server_.set_error_handler([this](const httplib::Request&, httplib::Response&) { ++requests; });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockLmServer() {
        server_.stop();
        thread_.join();
    }
    MockLmServer(const MockLmServer&) = delete;
    MockLmServer& operator=(const MockLmServer&) = delete;

    std::string url(const std::string& path = "/v1/completions") const {
        return "http://127.0.0.1:" + std::to_string(port_) + path;
    }

    static ctxuse::Json top_for(const std::string& prompt) {
        std::uint64_t h = 1469598103934665603ull;  // FNV-1a
        for (unsigned char c : prompt) h = (h ^ c) * 1099511628211ull;
        const double t = 1.0 + static_cast<double>(h % 97);
        const double f = 1.0 + static_cast<double>((h / 97) % 89);
        const double n = 1.0 + static_cast<double>((h / 8633) % 23);
        const double z = t + f + n + 10.0;
        return {{" True", std::log(t / z)},    {" False", std::log(f / z)},   {" None", std::log(n / z)},
                {" Support", std::log(t / z)}, {" Refute", std::log(f / z)}, {" the", std::log(5.0 / z)}};
    }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace testing
