#include "recseg/core/types.hpp"

#include "recseg/core/error.hpp"

namespace recseg {

std::vector<InstanceMask> one_hot(const ClassMask& mask) {
  std::vector<InstanceMask> planes(mask.classes,
                                   InstanceMask::zeros(mask.height, mask.width));
  for (size_t i = 0; i < mask.labels.size(); ++i) {
    const std::uint8_t c = mask.labels[i];
    if (c >= mask.classes)
      throw DataError("one_hot: class index out of range");
    planes[c].bits[i] = 1;
  }
  return planes;
}

ClassMask argmax_planes(const std::vector<InstanceMask>& planes) {
  if (planes.empty()) throw DataError("argmax_planes: no planes");
  ClassMask mask = ClassMask::filled(planes[0].height, planes[0].width,
                                     static_cast<int>(planes.size()), 0);
  for (size_t i = 0; i < mask.labels.size(); ++i) {
    int chosen = -1;
    for (size_t c = 0; c < planes.size(); ++c) {
      if (planes[c].bits[i]) {
        if (chosen >= 0) throw DataError("argmax_planes: planes overlap");
        chosen = static_cast<int>(c);
      }
    }
    if (chosen < 0) throw DataError("argmax_planes: uncovered pixel");
    mask.labels[i] = static_cast<std::uint8_t>(chosen);
  }
  return mask;
}

InstanceMask foreground(const ClassMask& mask) {
  InstanceMask fg = InstanceMask::zeros(mask.height, mask.width);
  const std::uint8_t bg = static_cast<std::uint8_t>(mask.background_class());
  for (size_t i = 0; i < mask.labels.size(); ++i)
    fg.bits[i] = mask.labels[i] != bg ? 1 : 0;
  return fg;
}

}  // namespace recseg
