#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ttaloop/volume.hpp"

namespace ttaloop {

// predict_many failed on one input of a batch.
class BatchItemError : public Error {
 public:
  BatchItemError(std::size_t index, const std::string& what) : Error(what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

// Anything that maps a volume to a soft foreground map of the same geometry.
// Implementations must be deterministic.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual ProbMap predict_soft(const Volume& v) const = 0;

  // One prediction per input, in order. Segmenters with a per-call setup cost
  // (an external process) override this to handle the batch in one go.
  virtual std::vector<ProbMap> predict_many(std::span<const Volume> vs) const {
    std::vector<ProbMap> out;
    out.reserve(vs.size());
    for (std::size_t i = 0; i < vs.size(); ++i) {
      try {
        out.push_back(predict_soft(vs[i]));
      } catch (const std::exception& ex) {
        throw BatchItemError(i, ex.what());
      }
    }
    return out;
  }
};

}  // namespace ttaloop
