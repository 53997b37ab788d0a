#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tasim/conversation.hpp"
#include "tasim/core.hpp"
#include "tasim/experiment.hpp"

namespace tasim {

namespace detail {

inline std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\n") == std::string::npos) return value;
  std::string quoted = "\"";
  for (char c : value) {
    if (c == '"') quoted += "\"\"";
    else quoted.push_back(c);
  }
  quoted += "\"";
  return quoted;
}

inline std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace detail

inline std::string render_distribution_csv(
    std::vector<EgoStateDistribution> dists) {
  std::sort(dists.begin(), dists.end(),
            [](const EgoStateDistribution& a, const EgoStateDistribution& b) {
              std::string sa = slug(a.agent_name), sb = slug(b.agent_name);
              if (sa != sb) return sa < sb;
              return to_string(a.condition) < to_string(b.condition);
            });
  std::string out = "agent,condition,parent,adult,child,total,fallbacks\n";
  for (const EgoStateDistribution& d : dists) {
    out += detail::csv_field(slug(d.agent_name));
    out += ',';
    out += to_string(d.condition);
    out += ',' + std::to_string(d.counts.at(EgoState::parent));
    out += ',' + std::to_string(d.counts.at(EgoState::adult));
    out += ',' + std::to_string(d.counts.at(EgoState::child));
    out += ',' + std::to_string(d.total);
    out += ',' + std::to_string(d.fallbacks);
    out += '\n';
  }
  return out;
}

inline std::string render_transactions_csv(
    const std::vector<TransactionAnnotation>& annotations) {
  std::string out = "turn_index,kind,prev_target,cur_source\n";
  for (const TransactionAnnotation& a : annotations) {
    out += std::to_string(a.turn_index);
    out += ',';
    out += to_string(a.kind);
    out += ',';
    if (a.prev_target.has_value()) out += to_string(*a.prev_target);
    out += ',';
    out += to_string(a.cur_source);
    out += '\n';
  }
  return out;
}

// --- Bar charts -------------------------------------------------------------
//
// Static SVG bar charts with embedded count labels. Linear scale: a bar's
// height in pixels is plot_height * count / axis_max, with
// axis_max = max(1, largest count in the distribution).

namespace detail {

inline constexpr double kChartW = 360.0;
inline constexpr double kChartH = 280.0;
inline constexpr double kPlotX = 44.0;
inline constexpr double kPlotY = 48.0;
inline constexpr double kPlotW = 300.0;
inline constexpr double kPlotH = 196.0;
inline constexpr double kBarW = 56.0;

inline const char* state_fill(EgoState s) {
  switch (s) {
    case EgoState::parent: return "#c05746";
    case EgoState::adult: return "#3d6e8f";
    case EgoState::child: return "#d9a441";
  }
  return "#3d6e8f";
}

// The inner fragment for one distribution, drawn with its top-left corner at
// (ox, oy) inside an existing <svg> element.
inline std::string render_bars_group(const EgoStateDistribution& d, double ox,
                                     double oy) {
  int axis_max = 1;
  for (const auto& [state, count] : d.counts) axis_max = std::max(axis_max, count);

  std::string out;
  out += "  <g>\n";
  out += "    <text x=\"" + fixed2(ox + kChartW / 2) + "\" y=\"" +
         fixed2(oy + 24) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\""
         " font-weight=\"bold\">" +
         slug(d.agent_name) + " / " + std::string(to_string(d.condition)) +
         "</text>\n";
  double baseline = oy + kPlotY + kPlotH;
  double slot_w = kPlotW / 3.0;
  std::size_t i = 0;
  for (EgoState s : kAllEgoStates) {
    int count = d.counts.at(s);
    double height = kPlotH * count / axis_max;
    double x = ox + kPlotX + slot_w * static_cast<double>(i) + (slot_w - kBarW) / 2;
    double y = baseline - height;
    out += "    <rect x=\"" + fixed2(x) + "\" y=\"" + fixed2(y) +
           "\" width=\"" + fixed2(kBarW) + "\" height=\"" + fixed2(height) +
           "\" fill=\"" + state_fill(s) + "\"/>\n";
    out += "    <text x=\"" + fixed2(x + kBarW / 2) + "\" y=\"" +
           fixed2(y - 6) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\""
           " font-size=\"13\">" +
           std::to_string(count) + "</text>\n";
    out += "    <text x=\"" + fixed2(x + kBarW / 2) + "\" y=\"" +
           fixed2(baseline + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\""
           " font-size=\"13\">" +
           state_letter(s) + std::string() + "</text>\n";
    ++i;
  }
  out += "    <line x1=\"" + fixed2(ox + kPlotX) + "\" y1=\"" +
         fixed2(baseline) + "\" x2=\"" + fixed2(ox + kPlotX + kPlotW) +
         "\" y2=\"" + fixed2(baseline) +
         "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
  out += "  </g>\n";
  return out;
}

inline std::string svg_open(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed2(w) +
         "\" height=\"" + fixed2(h) + "\" viewBox=\"0 0 " + fixed2(w) + " " +
         fixed2(h) + "\">\n";
}

}  // namespace detail

inline std::string render_distribution_svg(const EgoStateDistribution& d) {
  std::string out = detail::svg_open(detail::kChartW, detail::kChartH);
  out += detail::render_bars_group(d, 0.0, 0.0);
  out += "</svg>\n";
  return out;
}

// 2x2 panel: one row per condition (memory_on on top), one column per agent
// (alphabetical). Cells reuse the single-chart scale rule.
inline std::string render_panel_svg(std::vector<EgoStateDistribution> dists) {
  std::vector<std::string> agents;
  for (const EgoStateDistribution& d : dists) {
    if (std::find(agents.begin(), agents.end(), d.agent_name) == agents.end()) {
      agents.push_back(d.agent_name);
    }
  }
  std::sort(agents.begin(), agents.end(),
            [](const std::string& a, const std::string& b) {
              return slug(a) < slug(b);
            });
  std::vector<Condition> rows;
  for (Condition c : {Condition::memory_on, Condition::memory_off}) {
    for (const EgoStateDistribution& d : dists) {
      if (d.condition == c) {
        rows.push_back(c);
        break;
      }
    }
  }
  double w = detail::kChartW * static_cast<double>(agents.size());
  double h = detail::kChartH * static_cast<double>(rows.size());
  std::string out = detail::svg_open(w, h);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < agents.size(); ++c) {
      for (const EgoStateDistribution& d : dists) {
        if (d.condition == rows[r] && d.agent_name == agents[c]) {
          out += detail::render_bars_group(d, detail::kChartW * static_cast<double>(c),
                                           detail::kChartH * static_cast<double>(r));
        }
      }
    }
  }
  out += "</svg>\n";
  return out;
}

namespace detail {

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace detail

// Derives all analysis artifacts from a set of completed transcripts and
// writes them under analysis_dir: the per-agent distribution table, one
// transaction table per dialogue, one chart per (agent, condition), and the
// combined panel. Output depends only on the transcripts, so re-running over
// the same inputs reproduces identical bytes.
inline std::vector<EgoStateDistribution> write_analysis(
    const std::map<Condition, std::vector<Transcript>>& by_condition,
    const std::filesystem::path& analysis_dir) {
  std::error_code ec;
  std::filesystem::remove_all(analysis_dir, ec);
  std::filesystem::create_directories(analysis_dir, ec);
  if (ec) {
    throw IoError("cannot create " + analysis_dir.string() + ": " + ec.message());
  }

  std::set<std::string> agents;
  for (const auto& [condition, transcripts] : by_condition) {
    for (const Transcript& t : transcripts) {
      for (const Turn& turn : t.turns) agents.insert(turn.speaker);
    }
  }

  std::vector<EgoStateDistribution> dists;
  for (const auto& [condition, transcripts] : by_condition) {
    for (const std::string& agent : agents) {
      EgoStateDistribution d = analyze_distribution(transcripts, agent);
      d.condition = condition;
      dists.push_back(std::move(d));
    }
  }

  detail::write_text_file(analysis_dir / "distribution.csv",
                          render_distribution_csv(dists));

  std::filesystem::create_directories(analysis_dir / "transactions", ec);
  for (const auto& [condition, transcripts] : by_condition) {
    for (std::size_t n = 0; n < transcripts.size(); ++n) {
      char name[64];
      std::snprintf(name, sizeof(name), "%s-dialogue-%03d.csv",
                    std::string(to_string(condition)).c_str(),
                    static_cast<int>(n));
      detail::write_text_file(
          analysis_dir / "transactions" / name,
          render_transactions_csv(classify_transactions(transcripts[n])));
    }
  }

  for (const EgoStateDistribution& d : dists) {
    std::string name = "chart-" + slug(d.agent_name) + "-" +
                       std::string(to_string(d.condition)) + ".svg";
    detail::write_text_file(analysis_dir / name, render_distribution_svg(d));
  }
  detail::write_text_file(analysis_dir / "chart-panel.svg",
                          render_panel_svg(dists));
  return dists;
}

}  // namespace tasim
