#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ssbd/distill.hpp"
#include "ssbd/m1.hpp"
#include "ssbd/m2.hpp"
#include "ssbd/nn/footprint.hpp"
#include "ssbd/prefetch.hpp"

namespace ssbd {

struct FootprintRow {
  std::string component;
  Footprint footprint;
};

struct FootprintReport {
  std::vector<FootprintRow> rows;
  double student_teacher_ratio = 0;  // learnable weights, student / teacher
};

// Parameter audit of every model at its default configuration. Backbones are
// built in count-only mode, so this is cheap enough for a CLI call.
inline FootprintReport footprint_report(M1Config m1_cfg = {}, M2Config m2_cfg = {},
                                        PrefetchConfig prefetch_cfg = {},
                                        TeacherConfig teacher_cfg = {},
                                        StudentConfig student_cfg = {}) {
  m2_cfg.backbone.materialize = false;
  prefetch_cfg.backbone.materialize = false;
  teacher_cfg.backbone.materialize = false;
  student_cfg.backbone.materialize = false;

  FootprintReport report;
  const Footprint prefetch = ChildClassifier<float>(prefetch_cfg).footprint();
  const Footprint m1 = BinaryNet<float>(m1_cfg).footprint();
  const Footprint m2 = ActionIdentifier<float>(m2_cfg).footprint();
  const Footprint teacher = TeacherModel<float>(teacher_cfg).footprint();
  const Footprint student = StudentModel<float>(student_cfg).footprint();

  report.rows.push_back({"prefetch", prefetch});
  report.rows.push_back({"m1", m1});
  report.rows.push_back({"m2", m2});
  report.rows.push_back({"pipeline-total", prefetch + m1 + m2});
  report.rows.push_back({"teacher", teacher});
  report.rows.push_back({"student", student});
  report.student_teacher_ratio =
      static_cast<double>(student.learnable) / static_cast<double>(teacher.learnable);
  return report;
}

inline nlohmann::json footprint_report_to_json(const FootprintReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const FootprintRow& r : report.rows)
    rows.push_back({{"component", r.component},
                    {"learnable", r.footprint.learnable},
                    {"frozen", r.footprint.frozen},
                    {"total", r.footprint.total()}});
  return {{"rows", rows}, {"student_teacher_ratio", report.student_teacher_ratio}};
}

}  // namespace ssbd
