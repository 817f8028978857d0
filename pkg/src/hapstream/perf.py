"""Process-level performance knobs for long experiment runs."""
import ctypes
import ctypes.util
import sys

_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3
_tuned = False


def tune_allocator(threshold=64 << 20):
    """Keep ~1 MB numpy temporaries on the glibc heap instead of fresh mmap pages.

    Each training step allocates hundreds of arrays of this size; with the
    default mmap threshold every one of them page-faults.  No-op off glibc.
    """
    global _tuned
    if _tuned or not sys.platform.startswith("linux"):
        return
    try:
        libc = ctypes.CDLL(ctypes.util.find_library("c"))
        libc.mallopt(_M_MMAP_THRESHOLD, threshold)
        libc.mallopt(_M_TRIM_THRESHOLD, 2 * threshold)
    except (OSError, AttributeError):
        return
    _tuned = True
