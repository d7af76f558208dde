#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ttaloop/segmenter.hpp"

namespace ttaloop {

// Job directory shared with an out-of-process segmenter:
//
//   <job>/manifest.json   {"format":"ttaloop-job/1","items":[{"id","input","output"}, ...]}
//   <job>/in/<id>.svol.*  intensity volumes written by the pipeline
//   <job>/out/<id>.svol.* prob maps written by the external process
//
// Paths in the manifest are relative to the job directory. An output is
// accepted when it is a prob-kind svol with the geometry of its input.
struct JobItem {
  std::string id;
  std::string input;
  std::string output;
};

inline constexpr const char* kJobFormat = "ttaloop-job/1";

void write_job_manifest(const std::filesystem::path& job, const std::vector<JobItem>& items);
std::vector<JobItem> read_job_manifest(const std::filesystem::path& job);

// Worker side of the contract: writes every missing output with `seg` and
// returns how many it wrote. Existing valid outputs are left alone.
std::size_t serve_job(const Segmenter& seg, const std::filesystem::path& job);

// Runs `command` through the shell for each batch, with every "{job}"
// replaced by the job directory (appended as the last argument when the
// placeholder is absent). Job directories are named by a digest of their
// inputs, so a rerun finds the outputs of an interrupted one and skips the
// command when they are complete.
class ExternalSegmenter : public Segmenter {
 public:
  ExternalSegmenter(std::string command, std::filesystem::path jobs_root, bool keep_jobs = false);

  ProbMap predict_soft(const Volume& v) const override;
  std::vector<ProbMap> predict_many(std::span<const Volume> vs) const override;

  const std::filesystem::path& jobs_root() const { return jobs_root_; }

 private:
  std::string command_;
  std::filesystem::path jobs_root_;
  bool keep_jobs_;
};

}  // namespace ttaloop
