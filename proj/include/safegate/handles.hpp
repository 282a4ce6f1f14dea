#pragma once

#include <string>

#include "safegate/vectorspace.hpp"

namespace safegate {

// Abstract handles for the external model services. The HTTP clients in
// backends.hpp implement these; tests plug in deterministic in-process mocks.
// Implementations must tolerate concurrent in-flight calls.

class TextGenerator {
public:
  virtual ~TextGenerator() = default;
  virtual std::string generate(const std::string& prompt) = 0;
};

class Embedder {
public:
  virtual ~Embedder() = default;
  virtual Embedding embed(const std::string& text) = 0;
  /// Stable identity string recorded in reports (model name, endpoint, ...).
  virtual std::string identity() const = 0;
};

class Rewriter {
public:
  virtual ~Rewriter() = default;
  virtual std::string rewrite(const std::string& text) = 0;
};

class ParaphraseJudge {
public:
  virtual ~ParaphraseJudge() = default;
  virtual bool equivalent(const std::string& s1, const std::string& s2) = 0;
};

}  // namespace safegate
