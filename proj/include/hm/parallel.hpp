#pragma once

namespace hm {

// Resolves a requested worker count: values < 1 mean "all available cores".
int resolve_workers(int requested);

}  // namespace hm
