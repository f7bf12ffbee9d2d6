#pragma once

#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>

#include "commands.hpp"

namespace latentce::cli {

// Admits at most `capacity` holders at once; waiters enter in arrival order.
class JobGate {
 public:
  explicit JobGate(int capacity);
  void acquire();
  void release();
  int capacity() const { return capacity_; }
  int active() const;
  int waiting() const;

 private:
  int capacity_;
  int active_ = 0;
  std::uint64_t next_ticket_ = 0;
  std::uint64_t admitted_ = 0;
  mutable std::mutex mu_;
  std::condition_variable cv_;
};

class JobSlot {
 public:
  explicit JobSlot(JobGate& gate) : gate_(gate) { gate_.acquire(); }
  ~JobSlot() { gate_.release(); }
  JobSlot(const JobSlot&) = delete;
  JobSlot& operator=(const JobSlot&) = delete;

 private:
  JobGate& gate_;
};

// HTTP front end over one checkpoint, probe and corpus. Artifacts are loaded
// once at construction and never written; a missing or unreadable model or
// probe leaves the service up with model endpoints answering 503.
class Service {
 public:
  explicit Service(const ServeOptions& options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  bool model_loaded() const;
  const std::string& load_error() const;

  // Binds to an ephemeral port and returns it, or -1 on failure.
  int bind_any_port(const std::string& host);
  bool bind(const std::string& host, int port);
  // Blocks serving requests until stop().
  bool listen_after_bind();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace latentce::cli
