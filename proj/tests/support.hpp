#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <thread>
#include <unistd.h>

#include "travel/recommendation.hpp"
#include "travel/scenario.hpp"

namespace testing {

inline std::filesystem::path data_dir() { return TRAVEL_AGENT_DATA_DIR; }
inline std::filesystem::path source_dir() { return TRAVEL_AGENT_SOURCE_DIR; }

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "travel-test-XXXXXX").string();
    path_ = ::mkdtemp(tmpl.data());
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Replies with a fixed text, optionally after sleeping. Counts calls.
class StubBackend : public travel::CompletionBackend {
 public:
  explicit StubBackend(std::string reply, std::chrono::milliseconds delay = std::chrono::milliseconds(0))
      : reply_(std::move(reply)), delay_(delay) {}
  travel::BackendReply complete(const travel::RenderedPrompt&) override {
    ++calls;
    if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
    return {reply_, std::nullopt};
  }
  travel::ResponseSource source() const override { return travel::ResponseSource::Remote; }
  std::atomic<int> calls{0};

 private:
  std::string reply_;
  std::chrono::milliseconds delay_;
};

// Runs a callback to produce each reply; the judge and dialogue prompts are
// told apart by prompt.kind.
class ScriptedBackend : public travel::CompletionBackend {
 public:
  using Fn = std::function<std::string(const travel::RenderedPrompt&)>;
  explicit ScriptedBackend(Fn fn) : fn_(std::move(fn)) {}
  travel::BackendReply complete(const travel::RenderedPrompt& p) override { return {fn_(p), 0}; }
  travel::ResponseSource source() const override { return travel::ResponseSource::Remote; }
  bool runs_inline() const override { return true; }

 private:
  Fn fn_;
};

class ThrowingBackend : public travel::CompletionBackend {
 public:
  travel::BackendReply complete(const travel::RenderedPrompt&) override { throw std::runtime_error("boom"); }
  travel::ResponseSource source() const override { return travel::ResponseSource::Remote; }
};

inline std::shared_ptr<const std::vector<travel::SpotRecord>> bundled_spots() {
  static auto spots =
      std::make_shared<const std::vector<travel::SpotRecord>>(travel::load_spots(data_dir() / "kyoto_spots.jsonl"));
  return spots;
}

// Mock backend, bundled spots, fixed clock.
inline travel::PipelineDeps mock_deps(travel::EngineConfig config = {}) {
  travel::PipelineDeps deps;
  deps.config = std::make_shared<const travel::EngineConfig>(std::move(config));
  deps.spots = bundled_spots();
  deps.backend = std::make_shared<travel::MockBackend>();
  deps.clock = [] { return std::int64_t{1000}; };
  return deps;
}

}  // namespace testing
