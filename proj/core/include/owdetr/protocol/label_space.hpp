#pragma once

#include <cstddef>
#include <vector>

#include "owdetr/data/types.hpp"

namespace owdetr::protocol {

// The evolving known set K^t. Label 0 is the unknown class and never becomes
// known.
class LabelSpace {
 public:
  LabelSpace() = default;

  // Appends a task's classes and advances the task counter. Throws
  // ContractError on overlap with the known set or on label 0.
  void add(const std::vector<int>& classes);

  const std::vector<int>& known() const { return known_; }
  std::size_t task() const { return history_.size(); }
  const std::vector<std::vector<int>>& history() const { return history_; }
  bool is_known(int label) const;
  data::ClassIndex index() const { return data::ClassIndex(known_); }
  // Classes added before the latest task, and by it.
  std::vector<int> previous() const;
  std::vector<int> current() const;

  friend bool operator==(const LabelSpace&, const LabelSpace&) = default;

 private:
  std::vector<int> known_;
  std::vector<std::vector<int>> history_;
};

}  // namespace owdetr::protocol
