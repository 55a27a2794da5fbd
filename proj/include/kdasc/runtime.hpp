#pragma once

namespace kdasc {

// Keeps large activation buffers on the heap instead of fresh mmap regions,
// avoiding page-fault storms when training. Call once at program start.
void configure_runtime();

}  // namespace kdasc
