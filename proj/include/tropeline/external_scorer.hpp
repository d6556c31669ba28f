#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "tropeline/error.hpp"
#include "tropeline/jsonl.hpp"
#include "tropeline/scorer.hpp"

namespace tropeline {

struct ExternalScorerOptions {
  std::vector<std::string> command;
  std::chrono::milliseconds timeout{30000};
  std::size_t max_inflight = 8;
};

namespace detail {

// Line splitter over a raw file descriptor.
class FdLineReader {
 public:
  explicit FdLineReader(int fd) : fd_(fd) {}

  // Returns false on EOF or read error. timeout_ms < 0 blocks; on timeout throws TimeoutError.
  bool read_line(std::string& line, int timeout_ms) {
    auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms < 0 ? 0 : timeout_ms);
    for (;;) {
      auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        line.assign(buffer_, 0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
      }
      if (timeout_ms >= 0) {
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) throw TimeoutError("timed out waiting for a line from the adapter");
        pollfd pfd{fd_, POLLIN, 0};
        int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
        if (rc < 0 && errno == EINTR) continue;
        if (rc == 0) throw TimeoutError("timed out waiting for a line from the adapter");
      }
      char chunk[4096];
      ssize_t n = ::read(fd_, chunk, sizeof chunk);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return false;
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_;
  std::string buffer_;
};

inline bool write_all(int fd, const std::string& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    off += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace detail

// Scores pairs by talking to a child process over NDJSON on stdin/stdout.
//
//   adapter -> engine  {"type":"hello","version":1,"name":...}     (once, at start)
//   engine  -> adapter {"type":"score","id":N,"a":...,"b":...}
//   adapter -> engine  {"type":"result","id":N,"score":x} | {"type":"error","id":N,"message":...}
//
// Up to max_inflight requests are pipelined; responses are matched by id. A
// timed-out request fails alone. A child exit or an unparseable line fails
// every inflight request and poisons the scorer.
class ExternalScorer : public PairScorer {
 public:
  explicit ExternalScorer(ExternalScorerOptions options) : options_(std::move(options)) {
    if (options_.command.empty()) throw UsageError("external scorer command is empty");
    if (options_.max_inflight == 0) throw UsageError("max_inflight must be at least 1");
    ::signal(SIGPIPE, SIG_IGN);
    spawn();
    try {
      handshake();
    } catch (...) {
      kill_child();
      throw;
    }
    reader_ = std::thread([this] { read_loop(); });
  }

  ExternalScorer(const ExternalScorer&) = delete;
  ExternalScorer& operator=(const ExternalScorer&) = delete;

  ~ExternalScorer() override {
    try {
      shutdown();
    } catch (...) {
    }
  }

  std::string name() const override { return "external:" + adapter_name_; }
  const std::string& adapter_name() const { return adapter_name_; }

  // Closes the child's stdin and waits up to the timeout for it to exit,
  // killing it afterwards. Returns the exit code, or 128 + signal number.
  int shutdown() {
    std::lock_guard guard(shutdown_mutex_);
    if (exit_code_) return *exit_code_;
    {
      std::lock_guard lock(write_mutex_);
      if (to_child_ >= 0) {
        ::close(to_child_);
        to_child_ = -1;
      }
    }
    int status = 0;
    auto deadline = std::chrono::steady_clock::now() + options_.timeout;
    pid_t r = 0;
    while ((r = ::waitpid(pid_, &status, WNOHANG)) == 0 && std::chrono::steady_clock::now() < deadline) {
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    if (r == 0) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
    }
    if (reader_.joinable()) reader_.join();
    if (from_child_ >= 0) {
      ::close(from_child_);
      from_child_ = -1;
    }
    exit_code_ = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
    return *exit_code_;
  }

 protected:
  double score_pair(const CharacterRecord& a, const CharacterRecord& b) const override {
    auto slot = std::make_shared<Pending>();
    std::uint64_t id;
    {
      std::unique_lock lock(mutex_);
      cv_.wait(lock, [&] { return dead_ || inflight_ < options_.max_inflight; });
      if (dead_) throw ProtocolError(dead_reason_);
      id = next_id_++;
      ++inflight_;
      pending_.emplace(id, slot);
    }

    json request = {{"type", "score"}, {"id", id}, {"a", a.description}, {"b", b.description}};
    std::string line = request.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
    bool written;
    {
      std::lock_guard lock(write_mutex_);
      written = to_child_ >= 0 && detail::write_all(to_child_, line);
    }

    std::unique_lock lock(mutex_);
    auto finish = [&] {
      pending_.erase(id);
      --inflight_;
      cv_.notify_all();
    };
    if (!written) {
      finish();
      throw ProtocolError("failed to send request id " + std::to_string(id) + " to the adapter");
    }
    bool ready = cv_.wait_for(lock, options_.timeout, [&] { return slot->done; });
    finish();
    if (!ready) {
      throw TimeoutError("request id " + std::to_string(id) + " timed out after " +
                         std::to_string(options_.timeout.count()) + " ms");
    }
    if (!slot->error.empty()) throw ProtocolError(slot->error);
    return slot->score;
  }

 private:
  struct Pending {
    bool done = false;
    double score = 0.0;
    std::string error;
  };

  void spawn() {
    int in_pipe[2], out_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw ProtocolError(std::string("pipe: ") + std::strerror(errno));
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
      ::close(in_pipe[0]);
      ::close(in_pipe[1]);
      throw ProtocolError(std::string("pipe: ") + std::strerror(errno));
    }
    std::vector<char*> argv;
    for (auto& s : options_.command) argv.push_back(s.data());
    argv.push_back(nullptr);
    pid_ = ::fork();
    if (pid_ < 0) throw ProtocolError(std::string("fork: ") + std::strerror(errno));
    if (pid_ == 0) {
      ::dup2(in_pipe[0], STDIN_FILENO);
      ::dup2(out_pipe[1], STDOUT_FILENO);
      ::execvp(argv[0], argv.data());
      ::_exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    line_reader_ = std::make_unique<detail::FdLineReader>(from_child_);
  }

  void handshake() {
    std::string line;
    bool got;
    try {
      got = line_reader_->read_line(line, static_cast<int>(options_.timeout.count()));
    } catch (const TimeoutError&) {
      throw ProtocolError("adapter sent no hello within " + std::to_string(options_.timeout.count()) + " ms");
    }
    if (!got) throw ProtocolError("adapter exited before sending hello (command: " + options_.command[0] + ")");
    json hello;
    try {
      hello = json::parse(line);
    } catch (const json::exception&) {
      throw ProtocolError("invalid hello line from adapter: " + line);
    }
    if (!hello.is_object() || hello.value("type", "") != "hello") {
      throw ProtocolError("first adapter line is not a hello object: " + line);
    }
    if (!hello.contains("version") || !hello["version"].is_number_integer() || hello["version"].get<int>() != 1) {
      throw ProtocolError("unsupported protocol version in hello: " + line);
    }
    if (!hello.contains("name") || !hello["name"].is_string()) throw ProtocolError("hello lacks a name: " + line);
    adapter_name_ = hello["name"].get<std::string>();
  }

  void read_loop() {
    std::string line;
    for (;;) {
      bool got = false;
      try {
        got = line_reader_->read_line(line, -1);
      } catch (...) {
        got = false;
      }
      if (!got) {
        poison("adapter exited or closed its stdout");
        return;
      }
      if (line.empty()) continue;
      if (!handle_line(line)) {
        poison("malformed line from adapter: " + line.substr(0, 200));
        return;
      }
    }
  }

  // False when the line cannot be attributed to any request.
  bool handle_line(const std::string& line) {
    json msg;
    try {
      msg = json::parse(line);
    } catch (const json::exception&) {
      return false;
    }
    if (!msg.is_object() || !msg.contains("id") || !msg["id"].is_number_unsigned()) return false;
    auto id = msg["id"].get<std::uint64_t>();
    std::string type = msg.value("type", "");
    std::lock_guard lock(mutex_);
    auto it = pending_.find(id);
    if (it == pending_.end()) return true;  // timed out earlier
    auto& slot = *it->second;
    if (type == "result") {
      const auto& s = msg.contains("score") ? msg["score"] : json();
      if (!s.is_number()) {
        slot.error = "adapter result for request id " + std::to_string(id) + " has no numeric score";
      } else {
        double v = s.get<double>();
        if (!(v >= 0.0 && v <= 1.0)) {
          slot.error = "adapter returned out-of-range score " + s.dump() + " for request id " + std::to_string(id);
        } else {
          slot.score = v;
        }
      }
    } else if (type == "error") {
      std::string message = msg.contains("message") && msg["message"].is_string() ? msg["message"].get<std::string>() : "";
      slot.error = "adapter error for request id " + std::to_string(id) + ": " + message;
    } else {
      slot.error = "unexpected message type '" + type + "' for request id " + std::to_string(id);
    }
    slot.done = true;
    cv_.notify_all();
    return true;
  }

  void poison(const std::string& reason) {
    std::lock_guard lock(mutex_);
    dead_ = true;
    dead_reason_ = reason;
    for (auto& [id, slot] : pending_) {
      if (!slot->done) {
        slot->done = true;
        slot->error = reason + " (request id " + std::to_string(id) + ")";
      }
    }
    cv_.notify_all();
  }

  void kill_child() {
    if (to_child_ >= 0) ::close(to_child_);
    to_child_ = -1;
    ::kill(pid_, SIGKILL);
    int status;
    ::waitpid(pid_, &status, 0);
    if (from_child_ >= 0) ::close(from_child_);
    from_child_ = -1;
    exit_code_ = 128 + SIGKILL;
  }

  ExternalScorerOptions options_;
  std::string adapter_name_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::unique_ptr<detail::FdLineReader> line_reader_;
  std::thread reader_;

  mutable std::mutex mutex_;
  mutable std::condition_variable cv_;
  mutable std::map<std::uint64_t, std::shared_ptr<Pending>> pending_;
  mutable std::uint64_t next_id_ = 0;
  mutable std::size_t inflight_ = 0;
  bool dead_ = false;
  std::string dead_reason_;

  mutable std::mutex write_mutex_;
  std::mutex shutdown_mutex_;
  std::optional<int> exit_code_;
};

}  // namespace tropeline
