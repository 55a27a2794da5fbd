#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kdasc/model/spec.hpp"

namespace kdasc {

// CONV_FC counts multiply-accumulates of convolutions and dense layers only.
// EXTENDED also charges 2 per batch-norm output element and (pool area) per
// pooled output element; ReLU, dropout and softmax stay free.
enum class MacConvention { ConvFc, Extended };

std::string_view to_string(MacConvention c);

inline constexpr std::size_t kBytesPerParam = 4;

struct LayerComplexity {
  std::string name;
  LayerKind kind = LayerKind::ReLU;
  std::uint64_t params = 0;
  std::uint64_t bytes = 0;
  std::uint64_t macs = 0;
  // Bytes a checkpoint stores for the layer, running statistics included.
  std::uint64_t checkpoint_bytes = 0;
};

struct ComplexityReport {
  std::string model_name;
  MacConvention convention = MacConvention::ConvFc;
  std::vector<LayerComplexity> rows;
  std::uint64_t total_params = 0;
  std::uint64_t total_bytes = 0;
  std::uint64_t total_macs = 0;
  std::uint64_t total_checkpoint_bytes = 0;
};

// Trainable parameters per layer: conv kh*kw*Cin*Cout + Cout, dense in*out + out,
// batch norm 2*C; everything else 0.
std::vector<std::uint64_t> count_params(const ModelSpec& spec);
std::vector<std::uint64_t> count_macs(const ModelSpec& spec, MacConvention convention);

ComplexityReport audit(const ModelSpec& spec, MacConvention convention);

struct Budgets {
  std::uint64_t bytes = 131072;  // 128 KB
  double macs = 30e6;
};

struct BudgetVerdict {
  std::uint64_t bytes = 0;
  std::uint64_t macs = 0;
  bool fits_bytes = false;
  bool fits_macs = false;
  double bytes_margin_pct = 0.0;  // (budget - used) / budget * 100
  double macs_margin_pct = 0.0;

  bool fits() const { return fits_bytes && fits_macs; }
};

BudgetVerdict check_budgets(const ComplexityReport& report, const Budgets& budgets = {});
// Ensemble mode: members' footprints and MACs are summed.
BudgetVerdict check_budgets(std::span<const ComplexityReport> members, const Budgets& budgets = {});

// Published figures for the three-student system, kept for reconciliation only.
struct PublishedFigures {
  static constexpr std::uint64_t ensemble_params = 22962;
  static constexpr std::uint64_t ensemble_bytes = 88704;
  static constexpr double student_macs = 9.75e6;
  static constexpr double ensemble_macs = 29267550.0;
  static constexpr double student_memory_kb = 28.8;
};

// Tab-separated per-layer table with a TOTAL row.
std::string format_audit_tsv(const ComplexityReport& report);
// "FITS ..." or "EXCEEDS ..." followed by usage and margins.
std::string verdict_line(const BudgetVerdict& verdict, const Budgets& budgets = {});
// Side-by-side comparison of the audited student ensemble with the published
// figures under both MAC conventions.
std::string format_reconciliation(const ModelSpec& student);

}  // namespace kdasc
