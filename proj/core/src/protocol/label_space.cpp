#include "owdetr/protocol/label_space.hpp"

#include <algorithm>
#include <string>

#include "owdetr/errors.hpp"

namespace owdetr::protocol {

void LabelSpace::add(const std::vector<int>& classes) {
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const int c = classes[i];
    if (c == data::kUnknownLabel) {
      throw ContractError("label 0 is reserved for the unknown class");
    }
    if (is_known(c)) {
      throw ContractError("class " + std::to_string(c) + " is already known");
    }
    if (std::find(classes.begin(), classes.begin() + static_cast<long>(i), c) !=
        classes.begin() + static_cast<long>(i)) {
      throw ContractError("class " + std::to_string(c) + " listed twice");
    }
  }
  known_.insert(known_.end(), classes.begin(), classes.end());
  history_.push_back(classes);
}

bool LabelSpace::is_known(int label) const {
  return std::find(known_.begin(), known_.end(), label) != known_.end();
}

std::vector<int> LabelSpace::previous() const {
  if (history_.empty()) return {};
  return {known_.begin(), known_.end() - static_cast<long>(history_.back().size())};
}

std::vector<int> LabelSpace::current() const {
  if (history_.empty()) return {};
  return history_.back();
}

}  // namespace owdetr::protocol
