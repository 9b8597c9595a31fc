#pragma once

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "typecase/curation.hpp"
#include "typecase/model.hpp"

namespace typecase {

struct ValidationIssue {
  std::string code;
  std::string message;
  std::string entity;

  bool operator==(const ValidationIssue&) const = default;
};

struct ValidationReport {
  std::vector<ValidationIssue> errors;
  std::vector<ValidationIssue> warnings;

  bool ok() const { return errors.empty(); }
  bool operator==(const ValidationReport&) const = default;
};

std::string format_report(const ValidationReport& report);

struct ValidationOptions {
  // Allowed deviation of a segment height from the nearest unit multiple,
  // as a fraction of the unit height.
  double height_tolerance = 0.15;
};

// Error codes reported by validate().
namespace issue {
inline constexpr std::string_view kNonPositiveUnit = "NONPOSITIVE_UNIT";
inline constexpr std::string_view kNonPositiveSegmentWidth = "NONPOSITIVE_SEGMENT_WIDTH";
inline constexpr std::string_view kDuplicateSpreadId = "DUPLICATE_SPREAD_ID";
inline constexpr std::string_view kSpreadIdsNotContiguous = "SPREAD_IDS_NOT_CONTIGUOUS";
inline constexpr std::string_view kNonPositivePageSize = "NONPOSITIVE_PAGE_SIZE";
inline constexpr std::string_view kDuplicateLineIndex = "DUPLICATE_LINE_INDEX";
inline constexpr std::string_view kDuplicateBlockId = "DUPLICATE_BLOCK_ID";
inline constexpr std::string_view kDuplicateSegmentId = "DUPLICATE_SEGMENT_ID";
inline constexpr std::string_view kEmptyText = "EMPTY_TEXT";
inline constexpr std::string_view kEmptyJibo = "EMPTY_JIBO";
inline constexpr std::string_view kDanglingSpread = "DANGLING_SPREAD";
inline constexpr std::string_view kDanglingLine = "DANGLING_LINE";
inline constexpr std::string_view kDanglingBlock = "DANGLING_BLOCK";
inline constexpr std::string_view kBadBBox = "BAD_BBOX";
inline constexpr std::string_view kKeyMismatch = "KEY_MISMATCH";
inline constexpr std::string_view kEmptyBlock = "EMPTY_BLOCK";
inline constexpr std::string_view kMembershipMismatch = "MEMBERSHIP_MISMATCH";
// warnings
inline constexpr std::string_view kHeightNotUnitMultiple = "H_NOT_UNIT_MULTIPLE";
inline constexpr std::string_view kBBoxOutOfPage = "BBOX_OUT_OF_PAGE";
}  // namespace issue

// Checks every core-model invariant (errors) and the segmentation
// assumptions (warnings). Never mutates; deterministic order.
ValidationReport validate(const Dataset& ds, const ValidationOptions& options = {});

// True if |h - round(h/unit)*unit| exceeds tolerance*unit.
bool height_off_unit(int h_px, double unit_px, double tolerance = 0.15);

struct ParsedDataset {
  Dataset dataset;
  EditLog log;
  ValidationReport report;
};

// Thrown by parse_dataset; code is SyntaxError, SchemaError or
// IntegrityError. Integrity failures carry the full validation report.
class DatasetError : public Error {
 public:
  DatasetError(ErrorCode code, std::string message, std::string entity, ValidationReport report = {})
      : Error(code, std::move(message), std::move(entity)), report_(std::move(report)) {}

  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;
};

ParsedDataset parse_dataset(std::string_view text, const ValidationOptions& options = {});

// Canonical serialization: fixed key order, entities sorted by id, two-space
// indentation, trailing newline. Identical inputs give identical bytes.
std::string export_dataset(const Dataset& ds, const EditLog& log = {});

// Import adapters turn an upstream file format into the canonical model.
using ImportAdapter = std::function<ParsedDataset(std::string_view)>;
const std::map<std::string, ImportAdapter, std::less<>>& import_adapters();

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

}  // namespace typecase
