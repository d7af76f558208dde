#include "ttaloop/external.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <string_view>

#include <json.hpp>

#include "ttaloop/rng.hpp"
#include "ttaloop/svol.hpp"

namespace ttaloop {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out.push_back(c);
    }
  }
  return out + "'";
}

std::string item_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return buf;
}

std::string batch_digest(std::span<const Volume> vs) {
  std::uint64_t h = fnv1a("batch");
  for (const auto& v : vs) {
    h = fnv1a(v.geometry().describe(), h);
    const auto d = v.data();
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(float)), h);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// The accepted output of an item, or nothing when it is missing or unusable.
std::optional<ProbMap> accepted_output(const fs::path& job, const JobItem& item,
                                       const Geometry& expected, std::string* why) {
  const fs::path out = job / item.output;
  if (!fs::exists(out)) {
    if (why) *why = "no output " + item.output;
    return std::nullopt;
  }
  try {
    ProbMap p = read_probmap(out);
    if (!(p.geometry() == expected)) {
      if (why) *why = "output " + item.output + " has geometry " + p.geometry().describe() +
                      ", input has " + expected.describe();
      return std::nullopt;
    }
    return p;
  } catch (const Error& e) {
    if (why) *why = e.what();
    return std::nullopt;
  }
}

}  // namespace

void write_job_manifest(const fs::path& job, const std::vector<JobItem>& items) {
  json list = json::array();
  for (const auto& it : items) list.push_back({{"id", it.id}, {"input", it.input}, {"output", it.output}});
  fs::create_directories(job);
  std::ofstream out(job / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write job manifest in " + job.string());
  out << json{{"format", kJobFormat}, {"items", list}}.dump(2) << "\n";
}

std::vector<JobItem> read_job_manifest(const fs::path& job) {
  std::ifstream in(job / "manifest.json");
  if (!in) throw IoError("no job manifest in " + job.string());
  try {
    json j;
    in >> j;
    if (j.at("format").get<std::string>() != kJobFormat) {
      throw ValidationError("job manifest format is not " + std::string(kJobFormat));
    }
    std::vector<JobItem> items;
    for (const auto& e : j.at("items")) {
      items.push_back({e.at("id").get<std::string>(), e.at("input").get<std::string>(),
                       e.at("output").get<std::string>()});
    }
    return items;
  } catch (const json::exception& e) {
    throw ValidationError("malformed job manifest in " + job.string() + ": " + e.what());
  }
}

std::size_t serve_job(const Segmenter& seg, const fs::path& job) {
  std::size_t written = 0;
  for (const auto& item : read_job_manifest(job)) {
    const Volume v = read_volume(job / item.input);
    if (accepted_output(job, item, v.geometry(), nullptr)) continue;
    write_svol(job / item.output, seg.predict_soft(v));
    ++written;
  }
  return written;
}

ExternalSegmenter::ExternalSegmenter(std::string command, fs::path jobs_root, bool keep_jobs)
    : command_(std::move(command)), jobs_root_(std::move(jobs_root)), keep_jobs_(keep_jobs) {
  if (command_.empty()) throw ArgumentError("external segmenter needs a command");
}

ProbMap ExternalSegmenter::predict_soft(const Volume& v) const {
  auto out = predict_many(std::span<const Volume>(&v, 1));
  return std::move(out.front());
}

std::vector<ProbMap> ExternalSegmenter::predict_many(std::span<const Volume> vs) const {
  if (vs.empty()) return {};
  const fs::path job = jobs_root_ / ("job-" + batch_digest(vs));
  std::vector<JobItem> items;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    const std::string id = item_id(i);
    items.push_back({id, "in/" + id + ".svol.json", "out/" + id + ".svol.json"});
  }

  auto collect = [&](bool strict) -> std::optional<std::vector<ProbMap>> {
    std::vector<ProbMap> preds;
    for (std::size_t i = 0; i < items.size(); ++i) {
      std::string why;
      auto p = accepted_output(job, items[i], vs[i].geometry(), &why);
      if (!p) {
        if (strict) throw BatchItemError(i, "external segmenter: " + why);
        return std::nullopt;
      }
      preds.push_back(std::move(*p));
    }
    return preds;
  };

  std::optional<std::vector<ProbMap>> preds;
  if (fs::exists(job / "manifest.json")) preds = collect(false);
  if (!preds) {
    for (std::size_t i = 0; i < vs.size(); ++i) {
      const fs::path in = job / items[i].input;
      if (!fs::exists(in)) write_svol(in, vs[i]);
    }
    fs::create_directories(job / "out");
    write_job_manifest(job, items);
    std::string cmd = command_;
    const std::string quoted = shell_quote(job.string());
    if (const auto at = cmd.find("{job}"); at != std::string::npos) {
      for (auto p = at; p != std::string::npos; p = cmd.find("{job}", p + quoted.size())) {
        cmd.replace(p, 5, quoted);
      }
    } else {
      cmd += " " + quoted;
    }
    const int status = std::system(cmd.c_str());
    if (status != 0) {
      throw BatchItemError(0, "external segmenter command exited with status " +
                                  std::to_string(status) + ": " + cmd);
    }
    preds = collect(true);
  }
  if (!keep_jobs_) {
    std::error_code ec;
    fs::remove_all(job, ec);
  }
  return std::move(*preds);
}

}  // namespace ttaloop
