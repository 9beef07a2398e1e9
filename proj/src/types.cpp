#include "sdsr/types.hpp"

#include <algorithm>

namespace sdsr {

PromptBundle PromptBundle::swapped() const {
    return {soft_right, soft_left, hard_right, hard_left, hard_len_right, hard_len_left};
}

namespace {

Tensor stack_padded(const std::vector<const Tensor*>& parts, int len) {
    const int d = parts.front()->dim(2);
    const int b = static_cast<int>(parts.size());
    Tensor out({b, len, d});
    for (int i = 0; i < b; ++i) {
        const Tensor& p = *parts[static_cast<std::size_t>(i)];
        if (p.dim(0) != 1 || p.dim(2) != d) throw ShapeError("PromptBundle::stack expects single-item bundles");
        std::copy(p.vec().begin(), p.vec().end(), out.vec().begin() + static_cast<std::ptrdiff_t>(i) * len * d);
    }
    return out;
}

}  // namespace

PromptBundle PromptBundle::stack(const std::vector<const PromptBundle*>& items) {
    if (items.empty()) throw ShapeError("PromptBundle::stack of nothing");
    int hard = 0;
    const int soft = items.front()->soft_left.dim(1);
    std::vector<const Tensor*> sl, sr, hl, hr;
    PromptBundle out;
    for (const PromptBundle* p : items) {
        hard = std::max({hard, p->hard_left.dim(1), p->hard_right.dim(1)});
        sl.push_back(&p->soft_left);
        sr.push_back(&p->soft_right);
        hl.push_back(&p->hard_left);
        hr.push_back(&p->hard_right);
        out.hard_len_left.push_back(p->hard_len_left.at(0));
        out.hard_len_right.push_back(p->hard_len_right.at(0));
    }
    out.soft_left = stack_padded(sl, soft);
    out.soft_right = stack_padded(sr, soft);
    out.hard_left = stack_padded(hl, hard);
    out.hard_right = stack_padded(hr, hard);
    return out;
}

}  // namespace sdsr
