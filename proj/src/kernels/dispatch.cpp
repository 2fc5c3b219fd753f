#include <cstdlib>
#include <stdexcept>
#include <string>

#include "finp/kernels.hpp"

namespace finp::kernels {

const KernelTable* avx2_table_ptr();

namespace {

bool cpu_has_avx2_fma() {
#if (defined(__GNUC__) || defined(__clang__)) && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& select() {
  if (const char* env = std::getenv("FINP_ISA")) {
    const std::string want(env);
    if (want == "scalar") return scalar_table();
    if (want == "avx2") return table(Isa::avx2);
    throw std::runtime_error("FINP_ISA must be 'scalar' or 'avx2', got '" + want + "'");
  }
  return supported(Isa::avx2) ? *avx2_table_ptr() : scalar_table();
}

}  // namespace

bool supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
      return avx2_table_ptr() != nullptr && cpu_has_avx2_fma();
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!supported(isa))
    throw std::runtime_error("kernel variant '" + std::string(isa_name(isa)) +
                             "' is not available on this CPU/build");
  return isa == Isa::avx2 ? *avx2_table_ptr() : scalar_table();
}

const KernelTable& active() {
  static const KernelTable& t = select();
  return t;
}

std::string_view isa_name(Isa isa) {
  return isa == Isa::avx2 ? "avx2" : "scalar";
}

}  // namespace finp::kernels
