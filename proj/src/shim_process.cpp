#include "trace_forge/shim_process.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "trace_forge/errors.hpp"

namespace trace_forge {
namespace {

void ignore_sigpipe_once() {
    static const bool done = [] {
        ::signal(SIGPIPE, SIG_IGN);
        return true;
    }();
    (void)done;
}

bool write_all(int fd, const std::string& data) {
    std::size_t off = 0;
    while (off < data.size()) {
        const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        off += static_cast<std::size_t>(n);
    }
    return true;
}

}  // namespace

ShimProcess::ShimProcess(std::vector<std::string> argv) : argv_(std::move(argv)) {
    if (argv_.empty()) throw std::invalid_argument("empty shim command");
    ignore_sigpipe_once();
}

ShimProcess::~ShimProcess() { stop(true); }

void ShimProcess::start() {
    int in_pipe[2];
    int out_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw ExecutionFailed("exception", std::strerror(errno));
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw ExecutionFailed("exception", std::strerror(errno));
    }
    std::vector<char*> args;
    for (auto& a : argv_) args.push_back(a.data());
    args.push_back(nullptr);

    const pid_t pid = ::fork();
    if (pid < 0) throw ExecutionFailed("exception", std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::execvp(args[0], args.data());
        _exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    pid_ = pid;
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    buffer_.clear();
}

void ShimProcess::stop(bool graceful) {
    if (pid_ <= 0) return;
    if (graceful && to_child_ >= 0) write_all(to_child_, "{\"mode\":\"shutdown\"}\n");
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    to_child_ = from_child_ = -1;
    int status = 0;
    if (graceful) {
        for (int i = 0; i < 50; ++i) {
            if (::waitpid(pid_, &status, WNOHANG) == pid_) {
                pid_ = -1;
                return;
            }
            ::usleep(10000);
        }
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
}

ShimProcess::Reply ShimProcess::request(const nlohmann::json& req, std::chrono::milliseconds deadline) {
    if (pid_ <= 0) start();
    if (!write_all(to_child_, req.dump() + "\n")) {
        stop(false);
        return {std::nullopt, "crashed"};
    }
    const auto until = std::chrono::steady_clock::now() + deadline;
    while (true) {
        if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            try {
                return {nlohmann::json::parse(line), {}};
            } catch (const nlohmann::json::exception&) {
                stop(false);
                return {std::nullopt, "crashed"};
            }
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(until - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            stop(false);
            return {std::nullopt, "timeout"};
        }
        pollfd pfd{from_child_, POLLIN, 0};
        const int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
        if (ready < 0 && errno == EINTR) continue;
        if (ready <= 0) continue;
        char chunk[65536];
        const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) {
            stop(false);
            return {std::nullopt, "crashed"};
        }
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

ShimPool::ShimPool(std::vector<std::string> argv, std::size_t size) {
    if (size < 1) throw std::invalid_argument("pool_size must be >= 1");
    for (std::size_t i = 0; i < size; ++i) {
        procs_.push_back(std::make_unique<ShimProcess>(argv));
        idle_.push_back(procs_.back().get());
    }
}

ShimPool::Lease ShimPool::acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return !idle_.empty(); });
    ShimProcess* p = idle_.back();
    idle_.pop_back();
    return Lease(*this, *p);
}

ShimPool::Lease::~Lease() {
    if (!proc_) return;
    {
        std::lock_guard lock(pool_->mu_);
        pool_->idle_.push_back(proc_);
    }
    pool_->cv_.notify_one();
}

}  // namespace trace_forge
