// Heap blocks start on a 64-byte boundary so that vectorized reductions over
// mapped buffers add in the same order wherever a buffer lands.
#include <algorithm>
#include <cstdlib>
#include <new>

namespace {

constexpr std::size_t kAlign = 64;

void* allocate(std::size_t n) noexcept {
    void* p = nullptr;
    if (posix_memalign(&p, kAlign, n == 0 ? 1 : n) != 0) return nullptr;
    return p;
}

void* allocate_or_throw(std::size_t n) {
    for (;;) {
        if (void* p = allocate(n)) return p;
        auto handler = std::get_new_handler();
        if (!handler) throw std::bad_alloc();
        handler();
    }
}

void* allocate_aligned_or_throw(std::size_t n, std::align_val_t al) {
    const auto a = std::max(kAlign, static_cast<std::size_t>(al));
    void* p = nullptr;
    if (posix_memalign(&p, a, n == 0 ? 1 : n) != 0) throw std::bad_alloc();
    return p;
}

}  // namespace

void* operator new(std::size_t n) { return allocate_or_throw(n); }
void* operator new[](std::size_t n) { return allocate_or_throw(n); }
void* operator new(std::size_t n, const std::nothrow_t&) noexcept { return allocate(n); }
void* operator new[](std::size_t n, const std::nothrow_t&) noexcept { return allocate(n); }
void* operator new(std::size_t n, std::align_val_t al) { return allocate_aligned_or_throw(n, al); }
void* operator new[](std::size_t n, std::align_val_t al) { return allocate_aligned_or_throw(n, al); }

void operator delete(void* p) noexcept { std::free(p); }
void operator delete[](void* p) noexcept { std::free(p); }
void operator delete(void* p, std::size_t) noexcept { std::free(p); }
void operator delete[](void* p, std::size_t) noexcept { std::free(p); }
void operator delete(void* p, const std::nothrow_t&) noexcept { std::free(p); }
void operator delete[](void* p, const std::nothrow_t&) noexcept { std::free(p); }
void operator delete(void* p, std::align_val_t) noexcept { std::free(p); }
void operator delete[](void* p, std::align_val_t) noexcept { std::free(p); }
void operator delete(void* p, std::size_t, std::align_val_t) noexcept { std::free(p); }
void operator delete[](void* p, std::size_t, std::align_val_t) noexcept { std::free(p); }
