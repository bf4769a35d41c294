#pragma once

#include <mpfr.h>

#include <string>
#include <utility>

namespace caadnn {

// Owning wrapper around an mpfr_t. All arithmetic in the interval layer goes
// through this type so the arbitrary-precision backend stays behind one seam.
class BigFloat {
public:
    explicit BigFloat(mpfr_prec_t prec) {
        mpfr_init2(v_, prec);
        mpfr_set_zero(v_, 1);
    }

    BigFloat(double x, mpfr_prec_t prec, mpfr_rnd_t rnd = MPFR_RNDN) {
        mpfr_init2(v_, prec);
        mpfr_set_d(v_, x, rnd);
    }

    BigFloat(const BigFloat& other) {
        mpfr_init2(v_, mpfr_get_prec(other.v_));
        mpfr_set(v_, other.v_, MPFR_RNDN);
    }

    BigFloat(BigFloat&& other) noexcept {
        v_[0] = other.v_[0];
        other.v_[0]._mpfr_d = nullptr;
    }

    BigFloat& operator=(const BigFloat& other) {
        if (this != &other) {
            if (v_[0]._mpfr_d == nullptr) {
                mpfr_init2(v_, mpfr_get_prec(other.v_));
            } else if (mpfr_get_prec(v_) != mpfr_get_prec(other.v_)) {
                mpfr_set_prec(v_, mpfr_get_prec(other.v_));
            }
            mpfr_set(v_, other.v_, MPFR_RNDN);
        }
        return *this;
    }

    BigFloat& operator=(BigFloat&& other) noexcept {
        if (this != &other) {
            std::swap(v_[0], other.v_[0]);
        }
        return *this;
    }

    ~BigFloat() {
        if (v_[0]._mpfr_d != nullptr) {
            mpfr_clear(v_);
        }
    }

    mpfr_ptr get() noexcept { return v_; }
    mpfr_srcptr get() const noexcept { return v_; }

    mpfr_prec_t precision() const noexcept { return mpfr_get_prec(v_); }

    double to_double(mpfr_rnd_t rnd) const { return mpfr_get_d(v_, rnd); }

    bool is_inf() const noexcept { return mpfr_inf_p(v_) != 0; }
    bool is_nan() const noexcept { return mpfr_nan_p(v_) != 0; }
    bool is_zero() const noexcept { return mpfr_zero_p(v_) != 0; }
    int sign() const noexcept { return mpfr_sgn(v_); }

    // Decimal rendering with `digits` significant digits, rounded in the
    // given direction ("inf"/"-inf" for infinities).
    std::string to_decimal(int digits, mpfr_rnd_t rnd) const;

    friend int compare(const BigFloat& a, const BigFloat& b) { return mpfr_cmp(a.v_, b.v_); }

private:
    mpfr_t v_;
};

}  // namespace caadnn
