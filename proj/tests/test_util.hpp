#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "gmocat/model.hpp"
#include "gmocat/types.hpp"

namespace testutil {

/// Unique scratch directory under the build tree, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("gmocat_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

/// Builds a StudentLog from (question, correct) pairs with a concept map.
inline gmocat::StudentLog make_log(
    int student, const std::vector<std::pair<int, int>>& responses,
    const std::vector<std::vector<gmocat::ConceptId>>& question_concepts) {
  gmocat::StudentLog log;
  log.student = student;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    gmocat::ResponseRecord rec;
    rec.question = responses[i].first;
    rec.concepts = question_concepts.at(responses[i].first);
    rec.correct = responses[i].second;
    rec.position = static_cast<int>(i);
    log.records.push_back(rec);
  }
  return log;
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  int entries_checked = 0;
  std::string worst_param;
};

/// Central finite differences (step h) over every entry of every model
/// parameter, compared against `analytic` (params() order). Relative error
/// uses max(|analytic|, |numeric|) as the scale; gradients that are tiny on
/// both sides compare absolutely.
inline GradCheckReport finite_difference_check(gmocat::model::GmocatModel& m,
                                               const std::function<double()>& loss,
                                               const std::vector<Eigen::MatrixXd>& analytic,
                                               double h = 1e-5) {
  GradCheckReport report;
  std::vector<gmocat::model::NamedParam> params = m.params();
  for (std::size_t k = 0; k < params.size(); ++k) {
    Eigen::MatrixXd& value = *params[k].value;
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double saved = value(i);
      value(i) = saved + h;
      const double up = loss();
      value(i) = saved - h;
      const double down = loss();
      value(i) = saved;

      const double numeric = (up - down) / (2.0 * h);
      const double exact = analytic[k](i);
      const double scale = std::max(std::abs(numeric), std::abs(exact));
      double rel = 0.0;
      if (scale > 1e-6) {
        rel = std::abs(numeric - exact) / scale;
      } else if (std::abs(numeric - exact) > 1e-8) {
        rel = 1.0;  // both should be ~zero; a large absolute gap is a failure
      }
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = params[k].name + "[" + std::to_string(i) + "]";
      }
      ++report.entries_checked;
    }
  }
  return report;
}

}  // namespace testutil
