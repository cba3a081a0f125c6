//! Allocator tuning: keeps large activation buffers on the heap between steps
//! instead of returning them to the kernel.

use std::sync::Once;

static TUNE: Once = Once::new();

/// Idempotent; a no-op outside glibc targets.
pub fn tune_allocator() {
    TUNE.call_once(|| {
        #[cfg(all(target_os = "linux", target_env = "gnu"))]
        unsafe {
            libc::mallopt(libc::M_MMAP_THRESHOLD, 1 << 30);
            libc::mallopt(libc::M_TRIM_THRESHOLD, i32::MAX);
        }
    });
}
