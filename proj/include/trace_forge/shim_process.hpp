#pragma once

#include <chrono>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace trace_forge {

/// One shim child process speaking newline-delimited JSON over its stdio.
/// Started lazily; restarted after a timeout kill or a crash.
class ShimProcess {
public:
    explicit ShimProcess(std::vector<std::string> argv);
    ~ShimProcess();
    ShimProcess(const ShimProcess&) = delete;
    ShimProcess& operator=(const ShimProcess&) = delete;

    struct Reply {
        std::optional<nlohmann::json> response;
        std::string failure;  // "timeout" or "crashed" when response is empty
    };

    /// Writes one request line and waits up to `deadline` for one response
    /// line. On timeout the child is killed.
    Reply request(const nlohmann::json& request, std::chrono::milliseconds deadline);

    bool running() const noexcept { return pid_ > 0; }

private:
    void start();
    void stop(bool graceful);

    std::vector<std::string> argv_;
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
};

/// Fixed-size set of shim processes handed out one per concurrent caller.
class ShimPool {
public:
    ShimPool(std::vector<std::string> argv, std::size_t size);

    class Lease {
    public:
        Lease(ShimPool& pool, ShimProcess& proc) : pool_(&pool), proc_(&proc) {}
        Lease(Lease&& other) noexcept : pool_(other.pool_), proc_(other.proc_) { other.proc_ = nullptr; }
        Lease(const Lease&) = delete;
        ~Lease();
        ShimProcess* operator->() const { return proc_; }

    private:
        ShimPool* pool_;
        ShimProcess* proc_;
    };

    Lease acquire();

private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::vector<std::unique_ptr<ShimProcess>> procs_;
    std::vector<ShimProcess*> idle_;
};

}  // namespace trace_forge
