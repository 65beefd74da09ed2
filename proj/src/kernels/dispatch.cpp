#include <cstdlib>
#include <string>

#include "lcm/error.hpp"
#include "lcm/kernels.hpp"

namespace lcm::kernels {

namespace {

struct Table {
  float (*dot_f)(const float*, const float*, std::size_t);
  double (*dot_d)(const double*, const double*, std::size_t);
  void (*axpy_f)(float, const float*, float*, std::size_t);
  void (*axpy_d)(double, const double*, double*, std::size_t);
  float (*sum_f)(const float*, std::size_t);
  double (*sum_d)(const double*, std::size_t);
  void (*gemm_f)(std::size_t, std::size_t, std::size_t, const float*, std::size_t, const float*, std::size_t, float*,
                 std::size_t);
  void (*gemm_d)(std::size_t, std::size_t, std::size_t, const double*, std::size_t, const double*, std::size_t,
                 double*, std::size_t);
};

constexpr Table kScalarTable{scalar::dot, scalar::dot, scalar::axpy, scalar::axpy, scalar::sum, scalar::sum,
                            scalar::gemm_acc, scalar::gemm_acc};
#ifdef LCMKIT_HAVE_AVX2_KERNELS
constexpr Table kAvx2Table{avx2::dot, avx2::dot, avx2::axpy, avx2::axpy, avx2::sum, avx2::sum,
                          avx2::gemm_acc, avx2::gemm_acc};
#endif

bool cpu_has_avx2() {
#if defined(LCMKIT_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  if (const char* env = std::getenv("LCMKIT_SIMD")) {
    std::string v(env);
    if (v == "scalar") return Isa::kScalar;
    if (v == "avx2" && cpu_has_avx2()) return Isa::kAvx2;
  }
  return cpu_has_avx2() ? Isa::kAvx2 : Isa::kScalar;
}

struct State {
  Isa isa;
  const Table* table;
};

const Table* table_for(Isa isa) {
#ifdef LCMKIT_HAVE_AVX2_KERNELS
  if (isa == Isa::kAvx2) return &kAvx2Table;
#endif
  return &kScalarTable;
}

State& state() {
  static State s = [] {
    Isa isa = initial_isa();
    return State{isa, table_for(isa)};
  }();
  return s;
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

bool isa_supported(Isa isa) { return isa == Isa::kScalar || cpu_has_avx2(); }

Isa active_isa() { return state().isa; }

void set_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw ContractError("kernel ISA '" + std::string(isa_name(isa)) + "' is not supported on this CPU");
  }
  state() = State{isa, table_for(isa)};
}

float dot(const float* a, const float* b, std::size_t n) { return state().table->dot_f(a, b, n); }
double dot(const double* a, const double* b, std::size_t n) { return state().table->dot_d(a, b, n); }
void axpy(float alpha, const float* x, float* y, std::size_t n) { state().table->axpy_f(alpha, x, y, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { state().table->axpy_d(alpha, x, y, n); }
float sum(const float* x, std::size_t n) { return state().table->sum_f(x, n); }
double sum(const double* x, std::size_t n) { return state().table->sum_d(x, n); }
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
              std::size_t ldb, float* c, std::size_t ldc) {
  state().table->gemm_f(m, n, k, a, lda, b, ldb, c, ldc);
}
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda, const double* b,
              std::size_t ldb, double* c, std::size_t ldc) {
  state().table->gemm_d(m, n, k, a, lda, b, ldb, c, ldc);
}

}  // namespace lcm::kernels
