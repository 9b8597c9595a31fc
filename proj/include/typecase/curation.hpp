#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "typecase/model.hpp"

namespace typecase {

struct MoveSegment {
  SegmentId segment;
  BlockId from;
  BlockId to;
  bool operator==(const MoveSegment&) const = default;
};

struct MergeBlocks {
  BlockId src;
  BlockId dst;
  std::vector<SegmentId> moved;  // src's members at merge time, reading order
  bool operator==(const MergeBlocks&) const = default;
};

struct DetachSegment {
  SegmentId segment;
  BlockId from;
  BlockId new_block;
  bool operator==(const DetachSegment&) const = default;
};

using EditOp = std::variant<MoveSegment, MergeBlocks, DetachSegment>;

struct Edit {
  EditOp op;
  std::int64_t revision = 0;  // revision reached by applying this edit
  std::string timestamp;      // ISO-8601 UTC
  bool operator==(const Edit&) const = default;
};

struct EditLog {
  std::vector<Edit> entries;

  std::int64_t revision() const { return static_cast<std::int64_t>(entries.size()); }
  bool operator==(const EditLog&) const = default;
};

struct BlockChange {
  BlockId id;
  bool created = false;
  bool deleted = false;
  bool operator==(const BlockChange&) const = default;
};

// Applies or reverts one recorded edit in place. The dataset must be
// canonical; it stays canonical. Both validate fully before mutating and
// throw (KeyMismatch, SameBlock, SingletonBlock, UnknownId, IntegrityError)
// without side effects. Returns the blocks whose membership changed.
std::vector<BlockChange> apply_edit(Dataset& ds, const EditOp& op);
std::vector<BlockChange> revert_edit(Dataset& ds, const EditOp& op);

Dataset replay(Dataset pristine, const EditLog& log);
Dataset rewind(Dataset edited, const EditLog& log);

std::string utc_timestamp();

// Immutable curation state: the current dataset, the log that produced it
// from the pristine dataset, and the next never-used block id.
struct CurationState {
  Dataset dataset;
  EditLog log;
  std::int64_t next_block_id = 0;

  std::int64_t revision() const { return log.revision(); }
  bool operator==(const CurationState&) const = default;
};

// Pristine state (empty log) or a state resumed from an exported log. The
// log must rewind cleanly onto the dataset, otherwise IntegrityError.
CurationState make_state(Dataset ds, EditLog log = {});

struct EditResult {
  CurationState state;
  std::vector<BlockChange> changes;  // empty for a no-op
};

EditResult move_segment(const CurationState& state, SegmentId segment, BlockId to, std::string timestamp);
EditResult merge_blocks(const CurationState& state, BlockId src, BlockId dst, std::string timestamp);
EditResult detach_segment(const CurationState& state, SegmentId segment, std::string timestamp);
EditResult undo(const CurationState& state);

struct Snapshot {
  CurationState state;
  IndexedDataset indexed;
  std::uint64_t serial = 0;  // strictly increasing across snapshots of one Curator

  std::int64_t revision() const { return state.revision(); }
};

struct EditOutcome {
  std::shared_ptr<const Snapshot> snapshot;
  std::vector<BlockChange> changes;
  std::vector<CharacterKey> affected_characters;
};

// Single-writer front end. Edits serialize on one mutex and publish a new
// immutable snapshot; readers copy the snapshot pointer and never block on
// computation. An expected revision that differs from the current one fails
// with RevisionConflict.
class Curator {
 public:
  using Clock = std::function<std::string()>;

  explicit Curator(CurationState state, Clock clock = utc_timestamp);

  std::shared_ptr<const Snapshot> snapshot() const;

  EditOutcome move_segment(SegmentId segment, BlockId to, std::optional<std::int64_t> expected_revision = {});
  EditOutcome merge_blocks(BlockId src, BlockId dst, std::optional<std::int64_t> expected_revision = {});
  EditOutcome detach_segment(SegmentId segment, std::optional<std::int64_t> expected_revision = {});
  EditOutcome undo(std::optional<std::int64_t> expected_revision = {});

 private:
  template <class F>
  EditOutcome mutate(std::optional<std::int64_t> expected_revision, F&& f);

  Clock clock_;
  std::mutex write_mutex_;
  mutable std::mutex publish_mutex_;
  std::shared_ptr<const Snapshot> current_;
};

}  // namespace typecase
