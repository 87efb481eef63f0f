#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tailor {

// Unsigned arbitrary-precision integer, base 1e9 limbs. Covers design-space
// counting, where variant counts overflow 64 bits quickly.
class BigUint {
public:
    BigUint() : limbs_{0} {}
    BigUint(std::uint64_t v);

    BigUint& operator+=(const BigUint& other);
    BigUint& operator*=(const BigUint& other);
    friend BigUint operator+(BigUint a, const BigUint& b) { return a += b; }
    friend BigUint operator*(BigUint a, const BigUint& b) { return a *= b; }

    bool operator==(const BigUint& other) const { return limbs_ == other.limbs_; }
    bool operator!=(const BigUint& other) const { return !(*this == other); }
    bool operator<(const BigUint& other) const;
    bool operator<=(const BigUint& other) const { return *this < other || *this == other; }

    bool fits_u64() const;
    std::uint64_t as_u64() const; // valid when fits_u64()
    double as_double() const;

    std::string to_string() const;

private:
    void trim();
    std::vector<std::uint32_t> limbs_; // little-endian, base 1e9
};

} // namespace tailor
