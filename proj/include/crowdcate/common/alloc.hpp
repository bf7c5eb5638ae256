#pragma once

namespace crowdcate {

/// Keeps large tensor buffers on the heap instead of fresh mmap pages. Training allocates
/// and frees multi-megabyte blocks every step; with glibc defaults each one page-faults
/// back in. No-op on other allocators.
void tune_allocator();

}  // namespace crowdcate
