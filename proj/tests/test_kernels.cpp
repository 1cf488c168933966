#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "doctest.h"
#include "pirtune/kernels.hpp"

using namespace pirtune::kernels;

namespace {

std::vector<float> random_vec(std::mt19937& rng, size_t n, float lo = -2.0f, float hi = 2.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> v(n);
  for (float& x : v) x = dist(rng);
  return v;
}

std::vector<Backend> simd_backends() {
  std::vector<Backend> out;
  for (Backend b : {Backend::Avx2, Backend::Avx512, Backend::Neon}) {
    if (backend_supported(b)) out.push_back(b);
  }
  return out;
}

bool bitwise_equal(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

// Independent double-precision references for the three matmul forms.
std::vector<float> ref_mm_nn(const std::vector<float>& a, const std::vector<float>& b, int m,
                             int k, int n) {
  std::vector<float> c(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int kk = 0; kk < k; ++kk) {
        acc += static_cast<double>(a[i * k + kk]) * static_cast<double>(b[kk * n + j]);
      }
      c[i * n + j] = static_cast<float>(acc);
    }
  }
  return c;
}

std::vector<float> ref_mm_tn(const std::vector<float>& a, const std::vector<float>& b, int m,
                             int k, int n) {
  std::vector<float> c(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int kk = 0; kk < k; ++kk) {
        acc += static_cast<double>(a[kk * m + i]) * static_cast<double>(b[kk * n + j]);
      }
      c[i * n + j] = static_cast<float>(acc);
    }
  }
  return c;
}

std::vector<float> ref_mm_nt(const std::vector<float>& a, const std::vector<float>& b, int m,
                             int k, int n) {
  std::vector<float> c(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int kk = 0; kk < k; ++kk) {
        acc += static_cast<double>(a[i * k + kk]) * static_cast<double>(b[j * k + kk]);
      }
      c[i * n + j] = static_cast<float>(acc);
    }
  }
  return c;
}

void check_close(const std::vector<float>& got, const std::vector<float>& want, double rel,
                 double abs_floor) {
  REQUIRE(got.size() == want.size());
  for (size_t i = 0; i < got.size(); ++i) {
    const double tol = rel * std::abs(static_cast<double>(want[i])) + abs_floor;
    CHECK(std::abs(static_cast<double>(got[i]) - static_cast<double>(want[i])) <= tol);
  }
}

}  // namespace

TEST_CASE("backend plumbing") {
  CHECK(backend_supported(Backend::Scalar));
  const Backend best = detect_best_backend();
  CHECK(backend_supported(best));
  CHECK(std::string(backend_name(Backend::Scalar)) == "scalar");
  CHECK(std::string(backend_name(Backend::Avx2)) == "avx2");

  const Backend before = active_backend();
  set_backend(Backend::Scalar);
  CHECK(active_backend() == Backend::Scalar);
  set_backend(before);
}

TEST_CASE("elementwise kernels match scalar bit for bit") {
  std::mt19937 rng(7);
  const int64_t n = 1003;  // forces vector body plus tail
  const auto a = random_vec(rng, n);
  const auto b = random_vec(rng, n);
  const KernelTable& s = table_for(Backend::Scalar);

  std::vector<float> want(n), got(n);
  for (Backend bk : simd_backends()) {
    const KernelTable& t = table_for(bk);
    INFO("backend ", backend_name(bk));

    s.add(want.data(), a.data(), b.data(), 0, n);
    t.add(got.data(), a.data(), b.data(), 0, n);
    CHECK(bitwise_equal(got, want));

    s.sub(want.data(), a.data(), b.data(), 0, n);
    t.sub(got.data(), a.data(), b.data(), 0, n);
    CHECK(bitwise_equal(got, want));

    s.mul(want.data(), a.data(), b.data(), 0, n);
    t.mul(got.data(), a.data(), b.data(), 0, n);
    CHECK(bitwise_equal(got, want));

    s.scale(want.data(), a.data(), 0.37f, 0, n);
    t.scale(got.data(), a.data(), 0.37f, 0, n);
    CHECK(bitwise_equal(got, want));

    want = b;
    got = b;
    s.axpy(want.data(), a.data(), -1.13f, 0, n);
    t.axpy(got.data(), a.data(), -1.13f, 0, n);
    CHECK(bitwise_equal(got, want));

    s.leaky_fwd(want.data(), a.data(), 0.2f, 0, n);
    t.leaky_fwd(got.data(), a.data(), 0.2f, 0, n);
    CHECK(bitwise_equal(got, want));

    want = b;
    got = b;
    s.leaky_bwd(want.data(), a.data(), b.data(), 0.2f, 0, n);
    t.leaky_bwd(got.data(), a.data(), b.data(), 0.2f, 0, n);
    CHECK(bitwise_equal(got, want));
  }
}

TEST_CASE("optimizer kernels match scalar bit for bit over many steps") {
  std::mt19937 rng(11);
  const int64_t n = 517;
  const auto p0 = random_vec(rng, n);

  for (Backend bk : simd_backends()) {
    const KernelTable& s = table_for(Backend::Scalar);
    const KernelTable& t = table_for(bk);
    INFO("backend ", backend_name(bk));

    std::vector<float> ps = p0, ms(n, 0.0f), vs(n, 0.0f);
    std::vector<float> pt = p0, mt(n, 0.0f), vt(n, 0.0f);
    std::mt19937 grng(23);
    for (int step = 1; step <= 25; ++step) {
      const auto g = random_vec(grng, n, -0.5f, 0.5f);
      const float bc1 = 1.0f / (1.0f - std::pow(0.5f, static_cast<float>(step)));
      const float bc2 = 1.0f / (1.0f - std::pow(0.999f, static_cast<float>(step)));
      s.adam(ps.data(), ms.data(), vs.data(), g.data(), 0, n, 1e-3f, 0.5f, 0.999f, 1e-8f, bc1, bc2);
      t.adam(pt.data(), mt.data(), vt.data(), g.data(), 0, n, 1e-3f, 0.5f, 0.999f, 1e-8f, bc1, bc2);
    }
    CHECK(bitwise_equal(pt, ps));
    CHECK(bitwise_equal(mt, ms));
    CHECK(bitwise_equal(vt, vs));

    std::vector<float> qs = p0, ws(n, 0.0f);
    std::vector<float> qt = p0, wt(n, 0.0f);
    std::mt19937 hrng(29);
    for (int step = 0; step < 25; ++step) {
      const auto g = random_vec(hrng, n, -0.5f, 0.5f);
      s.rmsprop(qs.data(), ws.data(), g.data(), 0, n, 1e-2f, 0.9f, 1e-8f);
      t.rmsprop(qt.data(), wt.data(), g.data(), 0, n, 1e-2f, 0.9f, 1e-8f);
    }
    CHECK(bitwise_equal(qt, qs));
    CHECK(bitwise_equal(wt, ws));
  }
}

TEST_CASE("first optimizer steps land where the update rules say") {
  // Adam, step 1: mhat = g, vhat = g^2, so the step is lr*g/(|g|+eps),
  // i.e. lr*sign(g) up to eps.
  std::vector<float> p{0.0f, 1.0f}, m{0.0f, 0.0f}, v{0.0f, 0.0f};
  std::vector<float> g{1.0f, -1.0f};
  const float lr = 1e-3f;
  const float bc1 = 1.0f / (1.0f - 0.5f);
  const float bc2 = 1.0f / (1.0f - 0.999f);
  adam_update(p.data(), m.data(), v.data(), g.data(), 2, lr, 0.5f, 0.999f, 1e-8f, bc1, bc2);
  CHECK(std::abs(p[0] - (0.0f - lr)) <= 1e-6f * lr);
  CHECK(std::abs(p[1] - (1.0f + lr)) <= 1e-6f * lr);

  // RMSProp, step 1 with g=1, lr=0.01: v=0.1, step = 0.01/sqrt(0.1) = 0.031623.
  std::vector<float> q{0.0f}, w{0.0f}, h{1.0f};
  rmsprop_update(q.data(), w.data(), h.data(), 1, 0.01f, 0.9f, 1e-8f);
  CHECK(q[0] == doctest::Approx(-0.0316227766).epsilon(1e-5));
}

TEST_CASE("reductions accumulate in double on every backend") {
  std::mt19937 rng(13);
  const int64_t n = 100003;
  const auto a = random_vec(rng, n, -1.0f, 1.0f);
  const auto b = random_vec(rng, n, -1.0f, 1.0f);
  const KernelTable& s = table_for(Backend::Scalar);

  // Long-double reference to confirm the scalar path itself.
  long double sum_ld = 0, sq_ld = 0, dot_ld = 0;
  for (int64_t i = 0; i < n; ++i) {
    sum_ld += a[i];
    sq_ld += static_cast<long double>(a[i]) * a[i];
    dot_ld += static_cast<long double>(a[i]) * b[i];
  }
  CHECK(s.sum(a.data(), n) == doctest::Approx(static_cast<double>(sum_ld)).epsilon(1e-12));
  CHECK(s.sumsq(a.data(), n) == doctest::Approx(static_cast<double>(sq_ld)).epsilon(1e-12));
  CHECK(s.dot(a.data(), b.data(), n) == doctest::Approx(static_cast<double>(dot_ld)).epsilon(1e-12));

  for (Backend bk : simd_backends()) {
    const KernelTable& t = table_for(bk);
    INFO("backend ", backend_name(bk));
    CHECK(t.sum(a.data(), n) == doctest::Approx(s.sum(a.data(), n)).epsilon(1e-12));
    CHECK(t.sumsq(a.data(), n) == doctest::Approx(s.sumsq(a.data(), n)).epsilon(1e-12));
    CHECK(t.dot(a.data(), b.data(), n) ==
          doctest::Approx(s.dot(a.data(), b.data(), n)).epsilon(1e-12));
  }
}

TEST_CASE("matmuls agree with a double-precision reference on every backend") {
  std::mt19937 rng(17);
  const struct {
    int m, k, n;
  } shapes[] = {{1, 1, 1},   {4, 16, 16}, {5, 7, 19},   {9, 33, 37},
                {32, 64, 48}, {3, 100, 5}, {48, 100, 3}, {21, 40, 7}};

  std::vector<Backend> all{Backend::Scalar};
  for (Backend b : simd_backends()) all.push_back(b);

  for (const auto& sh : shapes) {
    const auto a_nn = random_vec(rng, static_cast<size_t>(sh.m) * sh.k, -1.0f, 1.0f);
    const auto a_tn = random_vec(rng, static_cast<size_t>(sh.k) * sh.m, -1.0f, 1.0f);
    const auto a_nt = random_vec(rng, static_cast<size_t>(sh.m) * sh.k, -1.0f, 1.0f);
    const auto b_n = random_vec(rng, static_cast<size_t>(sh.k) * sh.n, -1.0f, 1.0f);
    const auto b_t = random_vec(rng, static_cast<size_t>(sh.n) * sh.k, -1.0f, 1.0f);

    const auto want_nn = ref_mm_nn(a_nn, b_n, sh.m, sh.k, sh.n);
    const auto want_tn = ref_mm_tn(a_tn, b_n, sh.m, sh.k, sh.n);
    const auto want_nt = ref_mm_nt(a_nt, b_t, sh.m, sh.k, sh.n);

    for (Backend bk : all) {
      const KernelTable& t = table_for(bk);
      INFO("backend ", backend_name(bk), " shape ", sh.m, "x", sh.k, "x", sh.n);
      std::vector<float> c(static_cast<size_t>(sh.m) * sh.n, -999.0f);
      t.mm_nn(c.data(), a_nn.data(), b_n.data(), 0, sh.m, sh.k, sh.n);
      check_close(c, want_nn, 1e-4, 1e-5);
      std::fill(c.begin(), c.end(), -999.0f);
      t.mm_tn(c.data(), a_tn.data(), b_n.data(), 0, sh.m, sh.m, sh.k, sh.n);
      check_close(c, want_tn, 1e-4, 1e-5);
      std::fill(c.begin(), c.end(), -999.0f);
      t.mm_nt(c.data(), a_nt.data(), b_t.data(), 0, sh.m, sh.k, sh.n);
      check_close(c, want_nt, 1e-4, 1e-5);
    }
  }
}

TEST_CASE("conv geometry follows ceil(in/stride) with split padding") {
  auto g = conv_geometry(2, 16, 16, 3, 3, 1);
  CHECK(g.out_h == 16);
  CHECK(g.out_w == 16);
  CHECK(g.pad_top == 1);
  CHECK(g.pad_left == 1);

  g = conv_geometry(1, 16, 16, 8, 3, 2);
  CHECK(g.out_h == 8);
  CHECK(g.pad_top == 0);  // total padding 1 goes to the bottom/right

  g = conv_geometry(1, 5, 5, 1, 4, 2);
  CHECK(g.out_h == 3);
  CHECK(g.pad_top == 1);  // total padding 3

  CHECK_THROWS(conv_geometry(0, 16, 16, 3, 3, 1));
}

TEST_CASE("im2col lays out patches in (ky, kx, c) order with zero padding") {
  // 1x2x2 image, 2 channels, 3x3 kernel, stride 1: every patch hits the
  // border. Check the patch centered at (0,0).
  const ConvGeometry g = conv_geometry(1, 2, 2, 2, 3, 1);
  REQUIRE(g.pad_top == 1);
  REQUIRE(g.pad_left == 1);
  // input[y][x][c] = 10*y + 2*x + c + 1
  std::vector<float> input(8);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x)
      for (int c = 0; c < 2; ++c) input[(y * 2 + x) * 2 + c] = 10.0f * y + 2.0f * x + c + 1.0f;
  std::vector<float> cols(static_cast<size_t>(g.out_h) * g.out_w * 18, -1.0f);
  im2col(input.data(), g, cols.data());

  // Patch at output (0,0): rows iy=-1 (zeros), 0, 1; cols ix=-1 (zeros), 0, 1.
  const float* p = cols.data();
  for (int i = 0; i < 6; ++i) CHECK(p[i] == 0.0f);  // ky=0 row fully padded
  // ky=1: (zero, zero), (1,2), (3,4)
  CHECK(p[6] == 0.0f);
  CHECK(p[7] == 0.0f);
  CHECK(p[8] == 1.0f);
  CHECK(p[9] == 2.0f);
  CHECK(p[10] == 3.0f);
  CHECK(p[11] == 4.0f);
  // ky=2: (zero, zero), (11,12), (13,14)
  CHECK(p[12] == 0.0f);
  CHECK(p[14] == 11.0f);
  CHECK(p[15] == 12.0f);
  CHECK(p[16] == 13.0f);
  CHECK(p[17] == 14.0f);
}

TEST_CASE("col2im_acc is the adjoint of im2col") {
  // Small-integer data keeps every product and partial sum exactly
  // representable, so <im2col(x), y> and <x, col2im(y)> must agree to the
  // last bit.
  std::mt19937 rng(19);
  std::uniform_int_distribution<int> xd(-3, 3), yd(-1, 1);
  for (const auto& [h, w, c, k, s] : {std::tuple{6, 6, 3, 3, 1}, std::tuple{7, 5, 2, 3, 2},
                                      std::tuple{8, 8, 4, 5, 2}}) {
    const ConvGeometry g = conv_geometry(2, h, w, c, k, s);
    const size_t in_size = static_cast<size_t>(2) * h * w * c;
    const size_t cols_size = static_cast<size_t>(2) * g.out_h * g.out_w * k * k * c;
    std::vector<float> x(in_size), y(cols_size);
    for (float& v : x) v = static_cast<float>(xd(rng));
    for (float& v : y) v = static_cast<float>(yd(rng));

    std::vector<float> cols(cols_size);
    im2col(x.data(), g, cols.data());
    std::vector<float> xadj(in_size, 0.0f);
    col2im_acc(y.data(), g, xadj.data());

    const double lhs = dot(cols.data(), y.data(), static_cast<int64_t>(cols_size));
    const double rhs = dot(x.data(), xadj.data(), static_cast<int64_t>(in_size));
    CHECK(lhs == rhs);
  }
}

TEST_CASE("results do not depend on the thread count") {
  std::mt19937 rng(31);
  const int m = 64, k = 128, n = 96;
  const auto a = random_vec(rng, static_cast<size_t>(m) * k);
  const auto b = random_vec(rng, static_cast<size_t>(k) * n);
  const auto big_x = random_vec(rng, 300000);
  const auto big_y = random_vec(rng, 300000);

  const int before = thread_count();

  set_thread_count(1);
  std::vector<float> c1(static_cast<size_t>(m) * n);
  mm_nn(c1.data(), a.data(), b.data(), m, k, n);
  std::vector<float> e1(big_x.size());
  add(e1.data(), big_x.data(), big_y.data(), static_cast<int64_t>(big_x.size()));

  set_thread_count(4);
  std::vector<float> c4(static_cast<size_t>(m) * n);
  mm_nn(c4.data(), a.data(), b.data(), m, k, n);
  std::vector<float> e4(big_x.size());
  add(e4.data(), big_x.data(), big_y.data(), static_cast<int64_t>(big_x.size()));

  set_thread_count(before);

  CHECK(bitwise_equal(c1, c4));
  CHECK(bitwise_equal(e1, e4));
}
