#include "kdasc/fusion/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kdasc/binary_io.hpp"
#include "kdasc/error.hpp"
#include "kdasc/manifest.hpp"

namespace kdasc {
namespace {

void finish_averages(SystemMetrics& m) {
  double acc = 0.0, ll = 0.0;
  std::size_t n = 0;
  for (const auto& c : m.classes) {
    if (!c.present) continue;
    acc += c.accuracy;
    ll += c.log_loss;
    ++n;
  }
  m.average_accuracy = n ? acc / static_cast<double>(n) : 0.0;
  m.average_log_loss = n ? ll / static_cast<double>(n) : 0.0;
}

std::string cell_acc(const ClassMetrics& c) { return c.present ? format_fixed(100.0 * c.accuracy, 1) : "absent"; }
std::string cell_ll(const ClassMetrics& c) { return c.present ? format_fixed(c.log_loss, 3) : "absent"; }

std::string signed_fixed(double v, int decimals) {
  std::string s = format_fixed(v, decimals);
  if (s == "-" + format_fixed(0.0, decimals)) s = format_fixed(0.0, decimals);
  return (v > 0 && s != format_fixed(0.0, decimals) ? "+" : "") + s;
}

std::string optional_cell(const std::optional<double>& v, int decimals) {
  return v ? format_fixed(*v, decimals) : "-";
}

SystemMetrics delta_column(const SystemMetrics& from, const SystemMetrics& to) {
  SystemMetrics d;
  d.name = "delta " + to.name;
  for (std::size_t k = 0; k < from.classes.size(); ++k) {
    ClassMetrics c;
    c.name = from.classes[k].name;
    c.present = from.classes[k].present && to.classes[k].present;
    c.count = to.classes[k].count;
    if (c.present) {
      c.accuracy = to.classes[k].accuracy - from.classes[k].accuracy;
      c.log_loss = to.classes[k].log_loss - from.classes[k].log_loss;
    }
    d.classes.push_back(c);
  }
  d.average_accuracy = to.average_accuracy - from.average_accuracy;
  d.average_log_loss = to.average_log_loss - from.average_log_loss;
  if (from.memory_kb && to.memory_kb) d.memory_kb = *to.memory_kb - *from.memory_kb;
  if (from.macs_m && to.macs_m) d.macs_m = *to.macs_m - *from.macs_m;
  return d;
}

}  // namespace

double clamped_nll(double p) { return -std::log(std::clamp(p, kProbClamp, 1.0 - kProbClamp)); }

SystemMetrics evaluate_predictions(const std::string& name, std::span<const std::size_t> predicted,
                                   std::span<const double> true_class_prob, std::span<const std::size_t> labels,
                                   std::span<const std::string> class_names) {
  if (predicted.size() != labels.size() || true_class_prob.size() != labels.size()) {
    throw ValidationError("evaluate: prediction and label counts differ");
  }
  const std::size_t c = class_names.size();
  std::vector<std::size_t> count(c, 0), correct(c, 0);
  std::vector<double> nll(c, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= c) throw ValidationError("evaluate: label index out of range");
    ++count[labels[i]];
    if (predicted[i] == labels[i]) ++correct[labels[i]];
    nll[labels[i]] += clamped_nll(true_class_prob[i]);
  }
  SystemMetrics m;
  m.name = name;
  for (std::size_t k = 0; k < c; ++k) {
    ClassMetrics cm;
    cm.name = class_names[k];
    cm.count = count[k];
    cm.present = count[k] > 0;
    if (cm.present) {
      cm.accuracy = static_cast<double>(correct[k]) / static_cast<double>(count[k]);
      cm.log_loss = nll[k] / static_cast<double>(count[k]);
    } else {
      m.warnings.push_back("class '" + cm.name + "' absent from evaluation data; excluded from averages");
    }
    m.classes.push_back(cm);
  }
  finish_averages(m);
  return m;
}

SystemMetrics evaluate_posteriors(const std::string& name, std::span<const ClassPosterior> posteriors,
                                  std::span<const std::size_t> labels, std::span<const std::string> class_names) {
  std::vector<std::size_t> pred;
  std::vector<double> prob;
  for (std::size_t i = 0; i < posteriors.size(); ++i) {
    if (posteriors[i].size() != class_names.size()) throw ValidationError("evaluate: posterior length mismatch");
    pred.push_back(decide_label(posteriors[i]));
    prob.push_back(i < labels.size() && labels[i] < posteriors[i].size() ? posteriors[i][labels[i]] : 0.0);
  }
  return evaluate_predictions(name, pred, prob, labels, class_names);
}

SystemMetrics evaluate_fused(const std::string& name, std::span<const FusionResult> fused,
                             std::span<const std::size_t> labels, std::span<const std::string> class_names) {
  std::vector<std::size_t> pred;
  std::vector<double> prob;
  for (std::size_t i = 0; i < fused.size(); ++i) {
    if (fused[i].fused.size() != class_names.size()) throw ValidationError("evaluate: fused length mismatch");
    pred.push_back(fused[i].predicted_label);
    const auto norm = renormalize(fused[i]);
    prob.push_back(i < labels.size() && labels[i] < norm.size() ? norm[labels[i]] : 0.0);
  }
  return evaluate_predictions(name, pred, prob, labels, class_names);
}

SystemMetrics reference_column(const std::string& name, std::span<const ReferenceRow> rows,
                               std::span<const std::string> class_names, std::optional<double> average_accuracy_pct,
                               std::optional<double> average_log_loss, std::optional<double> memory_kb,
                               std::optional<double> macs_m) {
  SystemMetrics m;
  m.name = name;
  for (const auto& cname : class_names) {
    ClassMetrics c;
    c.name = cname;
    for (const auto& r : rows) {
      if (r.class_name == cname) {
        c.present = true;
        c.accuracy = r.accuracy_pct / 100.0;
        c.log_loss = r.log_loss;
      }
    }
    m.classes.push_back(c);
  }
  for (const auto& r : rows) {
    if (std::find(class_names.begin(), class_names.end(), r.class_name) == class_names.end()) {
      throw ValidationError("reference column: unknown class '" + r.class_name + "'");
    }
  }
  finish_averages(m);
  if (average_accuracy_pct) m.average_accuracy = *average_accuracy_pct / 100.0;
  if (average_log_loss) m.average_log_loss = *average_log_loss;
  m.memory_kb = memory_kb;
  m.macs_m = macs_m;
  return m;
}

SystemMetrics dcase_baseline_reference(std::span<const std::string> class_names) {
  static const std::vector<ReferenceRow> rows{
      {"airport", 39.4, 1.534},       {"bus", 29.3, 1.758},           {"metro", 47.9, 1.382},
      {"metro_station", 36.0, 1.672}, {"park", 58.9, 1.448},          {"public_square", 20.8, 2.265},
      {"shopping_mall", 51.4, 1.385}, {"street_pedestrian", 30.1, 1.822}, {"street_traffic", 70.6, 1.025},
      {"tram", 44.6, 1.462},
  };
  return reference_column("DCASE baseline (published)", rows, class_names, 42.9, 1.575, 46.5, 29.23);
}

SystemMetrics load_reference_column(const std::string& name, const std::filesystem::path& path,
                                    std::span<const std::string> class_names) {
  const auto bytes = read_file_bytes(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::vector<ReferenceRow> rows;
  std::optional<double> avg_acc, avg_ll, mem, macs;
  std::string line;
  std::size_t lineno = 0;
  auto num = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": not a number: '" + s + "'");
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string tok; std::getline(ss, tok, '\t');) f.push_back(tok);
    if (f[0] == "class") continue;
    if (f[0] == "Memory (KB)" && f.size() >= 2) {
      mem = num(f[1]);
    } else if (f[0] == "MACs (M)" && f.size() >= 2) {
      macs = num(f[1]);
    } else if (f.size() >= 3 && f[0] == "Average") {
      avg_acc = num(f[1]);
      avg_ll = num(f[2]);
    } else if (f.size() >= 3) {
      rows.push_back({f[0], num(f[1]), num(f[2])});
    } else {
      throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": expected class, acc, logloss");
    }
  }
  return reference_column(name, rows, class_names, avg_acc, avg_ll, mem, macs);
}

Comparison compare_systems(std::vector<SystemMetrics> systems,
                           std::vector<std::pair<std::size_t, std::size_t>> delta_pairs) {
  if (systems.empty()) throw ValidationError("compare_systems: no reports");
  for (const auto& s : systems) {
    if (s.classes.size() != systems.front().classes.size()) {
      throw ValidationError("compare_systems: '" + s.name + "' has a different class set");
    }
    for (std::size_t k = 0; k < s.classes.size(); ++k) {
      if (s.classes[k].name != systems.front().classes[k].name) {
        throw ValidationError("compare_systems: '" + s.name + "' has a different class set");
      }
    }
  }
  Comparison cmp;
  for (const auto& [from, to] : delta_pairs) {
    if (from >= systems.size() || to >= systems.size()) throw ValidationError("compare_systems: bad delta pair");
    cmp.deltas.push_back(delta_column(systems[from], systems[to]));
  }
  cmp.systems = std::move(systems);
  cmp.delta_pairs = std::move(delta_pairs);
  return cmp;
}

std::string format_metrics_tsv(const Comparison& cmp) {
  std::vector<const SystemMetrics*> cols;
  for (const auto& s : cmp.systems) cols.push_back(&s);
  for (const auto& d : cmp.deltas) cols.push_back(&d);
  const std::size_t n_sys = cmp.systems.size();
  std::string out = "class";
  for (const auto* c : cols) out += "\t" + c->name + " acc\t" + c->name + " logloss";
  out += "\n";
  const std::size_t n_classes = cmp.systems.front().classes.size();
  for (std::size_t k = 0; k < n_classes; ++k) {
    out += cmp.systems.front().classes[k].name;
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const auto& c = cols[j]->classes[k];
      if (j < n_sys || !c.present) {
        out += "\t" + cell_acc(c) + "\t" + cell_ll(c);
      } else {
        out += "\t" + signed_fixed(100.0 * c.accuracy, 1) + "\t" + signed_fixed(c.log_loss, 3);
      }
    }
    out += "\n";
  }
  out += "Average";
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const auto* c = cols[j];
    if (j < n_sys) {
      out += "\t" + format_fixed(100.0 * c->average_accuracy, 1) + "\t" + format_fixed(c->average_log_loss, 3);
    } else {
      out += "\t" + signed_fixed(100.0 * c->average_accuracy, 1) + "\t" + signed_fixed(c->average_log_loss, 3);
    }
  }
  out += "\nMemory (KB)";
  for (const auto* c : cols) out += "\t" + optional_cell(c->memory_kb, 1) + "\t";
  out += "\nMACs (M)";
  for (const auto* c : cols) out += "\t" + optional_cell(c->macs_m, 2) + "\t";
  out += "\n";
  return out;
}

std::string format_metrics_table(const Comparison& cmp) {
  std::vector<const SystemMetrics*> cols;
  for (const auto& s : cmp.systems) cols.push_back(&s);
  for (const auto& d : cmp.deltas) cols.push_back(&d);
  const std::size_t n_sys = cmp.systems.size();
  const std::size_t n_classes = cmp.systems.front().classes.size();

  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header{""};
  for (const auto* c : cols) header.push_back(c->name);
  grid.push_back(header);
  for (std::size_t k = 0; k < n_classes; ++k) {
    std::vector<std::string> row{cmp.systems.front().classes[k].name};
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const auto& c = cols[j]->classes[k];
      if (!c.present) {
        row.push_back("absent");
      } else if (j < n_sys) {
        row.push_back(format_fixed(100.0 * c.accuracy, 1) + "/" + format_fixed(c.log_loss, 3));
      } else {
        row.push_back(signed_fixed(100.0 * c.accuracy, 1) + "/" + signed_fixed(c.log_loss, 3));
      }
    }
    grid.push_back(row);
  }
  std::vector<std::string> avg{"Average"}, mem{"Memory (KB)"}, macs{"MACs (M)"};
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const auto* c = cols[j];
    if (j < n_sys) {
      avg.push_back(format_fixed(100.0 * c->average_accuracy, 1) + "/" + format_fixed(c->average_log_loss, 3));
    } else {
      avg.push_back(signed_fixed(100.0 * c->average_accuracy, 1) + "/" + signed_fixed(c->average_log_loss, 3));
    }
    mem.push_back(optional_cell(c->memory_kb, 1));
    macs.push_back(optional_cell(c->macs_m, 2));
  }
  grid.push_back(avg);
  grid.push_back(mem);
  grid.push_back(macs);

  std::vector<std::size_t> width(grid.front().size(), 0);
  for (const auto& row : grid) {
    for (std::size_t j = 0; j < row.size(); ++j) width[j] = std::max(width[j], row[j].size());
  }
  std::string out;
  for (std::size_t r = 0; r < grid.size(); ++r) {
    for (std::size_t j = 0; j < grid[r].size(); ++j) {
      std::string cell = grid[r][j];
      cell.resize(width[j], ' ');
      out += (j ? " | " : "") + cell;
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    out += "\n";
    if (r == 0 || r == n_classes) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out += std::string(total + 3 * (width.size() - 1), '-') + "\n";
    }
  }
  return out;
}

}  // namespace kdasc
