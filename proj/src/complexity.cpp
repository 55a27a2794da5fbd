#include "kdasc/audit/complexity.hpp"

#include <numeric>

#include "kdasc/binary_io.hpp"
#include "kdasc/error.hpp"

namespace kdasc {
namespace {

std::uint64_t product(const ActShape& s) {
  std::uint64_t p = 1;
  for (auto e : s) p *= e;
  return p;
}

std::uint64_t conv_params(std::uint64_t cin, std::uint64_t cout, std::uint64_t kh, std::uint64_t kw) {
  return kh * kw * cin * cout + cout;
}

std::uint64_t conv_macs(std::uint64_t h, std::uint64_t w, std::uint64_t cin, std::uint64_t cout, std::uint64_t kh,
                        std::uint64_t kw) {
  return h * w * cout * (kh * kw * cin);
}

}  // namespace

std::string_view to_string(MacConvention c) { return c == MacConvention::ConvFc ? "CONV_FC" : "EXTENDED"; }

std::vector<std::uint64_t> count_params(const ModelSpec& spec) {
  const auto shapes = infer_shapes(spec);
  std::vector<std::uint64_t> out;
  ActShape in = input_act_shape(spec);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    std::uint64_t p = 0;
    switch (l.kind) {
      case LayerKind::Conv2D:
        p = conv_params(in.back(), l.units, l.kernel_h, l.kernel_w);
        break;
      case LayerKind::BatchNorm:
        p = 2 * in.back();
        break;
      case LayerKind::Dense:
        p = product(in) * l.units + l.units;
        break;
      case LayerKind::Residual:
        p = conv_params(in.back(), l.units, l.kernel_h, l.kernel_w) + 2 * l.units +
            conv_params(l.units, l.units, l.kernel_h, l.kernel_w) + 2 * l.units;
        if (in.back() != l.units) p += conv_params(in.back(), l.units, 1, 1);
        break;
      case LayerKind::ReLU:
      case LayerKind::AvgPool:
      case LayerKind::GlobalAvgPool:
      case LayerKind::Dropout:
      case LayerKind::Softmax:
        break;
      default:
        throw AuditError("cannot audit layer " + layer_name(spec, i) + ": unknown kind");
    }
    out.push_back(p);
    in = shapes[i];
  }
  return out;
}

std::vector<std::uint64_t> count_macs(const ModelSpec& spec, MacConvention convention) {
  const auto shapes = infer_shapes(spec);
  const bool extended = convention == MacConvention::Extended;
  std::vector<std::uint64_t> out;
  ActShape in = input_act_shape(spec);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const auto& o = shapes[i];
    std::uint64_t m = 0;
    switch (l.kind) {
      case LayerKind::Conv2D:
        m = conv_macs(o[0], o[1], in.back(), l.units, l.kernel_h, l.kernel_w);
        break;
      case LayerKind::Dense:
        m = product(in) * l.units;
        break;
      case LayerKind::BatchNorm:
        if (extended) m = 2 * product(o);
        break;
      case LayerKind::AvgPool:
        if (extended) m = product(o) * l.pool_h * l.pool_w;
        break;
      case LayerKind::GlobalAvgPool:
        if (extended) m = product(o) * in[0] * in[1];
        break;
      case LayerKind::Residual: {
        const std::uint64_t h = o[0], w = o[1];
        m = conv_macs(h, w, in.back(), l.units, l.kernel_h, l.kernel_w) +
            conv_macs(h, w, l.units, l.units, l.kernel_h, l.kernel_w);
        if (in.back() != l.units) m += conv_macs(h, w, in.back(), l.units, 1, 1);
        if (extended) m += 2 * 2 * product(o);
        break;
      }
      case LayerKind::ReLU:
      case LayerKind::Dropout:
      case LayerKind::Softmax:
        break;
      default:
        throw AuditError("cannot audit layer " + layer_name(spec, i) + ": unknown kind");
    }
    out.push_back(m);
    in = o;
  }
  return out;
}

ComplexityReport audit(const ModelSpec& spec, MacConvention convention) {
  const auto params = count_params(spec);
  const auto macs = count_macs(spec, convention);
  const auto layout = parameter_layout(spec);
  ComplexityReport r;
  r.model_name = spec.name;
  r.convention = convention;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    LayerComplexity row;
    row.name = layer_name(spec, i);
    row.kind = spec.layers[i].kind;
    row.params = params[i];
    row.bytes = kBytesPerParam * params[i];
    row.macs = macs[i];
    const std::string prefix = row.name + ".";
    for (const auto& e : layout) {
      if (e.name.compare(0, prefix.size(), prefix) == 0) row.checkpoint_bytes += kBytesPerParam * e.elements;
    }
    r.total_params += row.params;
    r.total_bytes += row.bytes;
    r.total_macs += row.macs;
    r.total_checkpoint_bytes += row.checkpoint_bytes;
    r.rows.push_back(std::move(row));
  }
  return r;
}

BudgetVerdict check_budgets(const ComplexityReport& report, const Budgets& budgets) {
  return check_budgets(std::span(&report, 1), budgets);
}

BudgetVerdict check_budgets(std::span<const ComplexityReport> members, const Budgets& budgets) {
  BudgetVerdict v;
  for (const auto& m : members) {
    v.bytes += m.total_bytes;
    v.macs += m.total_macs;
  }
  v.fits_bytes = v.bytes <= budgets.bytes;
  v.fits_macs = static_cast<double>(v.macs) <= budgets.macs;
  v.bytes_margin_pct = 100.0 * (static_cast<double>(budgets.bytes) - static_cast<double>(v.bytes)) /
                       static_cast<double>(budgets.bytes);
  v.macs_margin_pct = 100.0 * (budgets.macs - static_cast<double>(v.macs)) / budgets.macs;
  return v;
}

std::string format_audit_tsv(const ComplexityReport& report) {
  std::string out = "layer\tkind\tparams\tbytes\tmacs\tcheckpoint_bytes\n";
  for (const auto& r : report.rows) {
    out += r.name + "\t" + std::string(to_string(r.kind)) + "\t" + std::to_string(r.params) + "\t" +
           std::to_string(r.bytes) + "\t" + std::to_string(r.macs) + "\t" + std::to_string(r.checkpoint_bytes) + "\n";
  }
  out += "TOTAL\t" + std::string(to_string(report.convention)) + "\t" + std::to_string(report.total_params) + "\t" +
         std::to_string(report.total_bytes) + "\t" + std::to_string(report.total_macs) + "\t" +
         std::to_string(report.total_checkpoint_bytes) + "\n";
  return out;
}

std::string verdict_line(const BudgetVerdict& v, const Budgets& budgets) {
  auto signed_pct = [](double pct) { return (pct >= 0 ? "+" : "") + format_fixed(pct, 2) + "%"; };
  return std::string(v.fits() ? "FITS" : "EXCEEDS") + " bytes=" + std::to_string(v.bytes) + "/" +
         std::to_string(budgets.bytes) + " (" + (v.fits_bytes ? "ok " : "over ") + signed_pct(v.bytes_margin_pct) +
         ") macs=" + std::to_string(v.macs) + "/" + format_fixed(budgets.macs, 0) + " (" +
         (v.fits_macs ? "ok " : "over ") + signed_pct(v.macs_margin_pct) + ")";
}

std::string format_reconciliation(const ModelSpec& student) {
  const auto conv_fc = audit(student, MacConvention::ConvFc);
  const auto extended = audit(student, MacConvention::Extended);
  auto m = [](double v) { return format_fixed(v / 1e6, 3); };
  std::string out = "quantity\taudited\tpublished\tdelta\n";
  auto row = [&](const std::string& name, double ours, double published, int decimals) {
    out += name + "\t" + format_fixed(ours, decimals) + "\t" + format_fixed(published, decimals) + "\t" +
           format_fixed(ours - published, decimals) + "\n";
  };
  row("ensemble_params", 3.0 * static_cast<double>(conv_fc.total_params),
      static_cast<double>(PublishedFigures::ensemble_params), 0);
  row("ensemble_bytes", 3.0 * static_cast<double>(conv_fc.total_bytes),
      static_cast<double>(PublishedFigures::ensemble_bytes), 0);
  row("student_memory_kb", static_cast<double>(conv_fc.total_bytes) / 1000.0, PublishedFigures::student_memory_kb, 2);
  out += "student_macs_M_CONV_FC\t" + m(static_cast<double>(conv_fc.total_macs)) + "\t" +
         m(PublishedFigures::student_macs) + "\t" +
         m(static_cast<double>(conv_fc.total_macs) - PublishedFigures::student_macs) + "\n";
  out += "student_macs_M_EXTENDED\t" + m(static_cast<double>(extended.total_macs)) + "\t" +
         m(PublishedFigures::student_macs) + "\t" +
         m(static_cast<double>(extended.total_macs) - PublishedFigures::student_macs) + "\n";
  out += "ensemble_macs_M_CONV_FC\t" + m(3.0 * static_cast<double>(conv_fc.total_macs)) + "\t" +
         m(PublishedFigures::ensemble_macs) + "\t" +
         m(3.0 * static_cast<double>(conv_fc.total_macs) - PublishedFigures::ensemble_macs) + "\n";
  return out;
}

}  // namespace kdasc
