#include "tailor/bigint.hpp"

#include <algorithm>

namespace tailor {

namespace {
constexpr std::uint64_t kBase = 1000000000ULL;
}

BigUint::BigUint(std::uint64_t v) {
    limbs_.clear();
    if (v == 0) limbs_.push_back(0);
    while (v > 0) {
        limbs_.push_back(static_cast<std::uint32_t>(v % kBase));
        v /= kBase;
    }
}

void BigUint::trim() {
    while (limbs_.size() > 1 && limbs_.back() == 0) limbs_.pop_back();
}

BigUint& BigUint::operator+=(const BigUint& other) {
    std::uint64_t carry = 0;
    std::size_t n = std::max(limbs_.size(), other.limbs_.size());
    limbs_.resize(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t sum = carry + limbs_[i] + (i < other.limbs_.size() ? other.limbs_[i] : 0);
        limbs_[i] = static_cast<std::uint32_t>(sum % kBase);
        carry = sum / kBase;
    }
    if (carry) limbs_.push_back(static_cast<std::uint32_t>(carry));
    return *this;
}

BigUint& BigUint::operator*=(const BigUint& other) {
    std::vector<std::uint64_t> acc(limbs_.size() + other.limbs_.size(), 0);
    for (std::size_t i = 0; i < limbs_.size(); ++i) {
        if (limbs_[i] == 0) continue;
        std::uint64_t carry = 0;
        for (std::size_t j = 0; j < other.limbs_.size(); ++j) {
            std::uint64_t cur = acc[i + j] + carry +
                                static_cast<std::uint64_t>(limbs_[i]) * other.limbs_[j];
            acc[i + j] = cur % kBase;
            carry = cur / kBase;
        }
        std::size_t k = i + other.limbs_.size();
        while (carry) {
            std::uint64_t cur = acc[k] + carry;
            acc[k] = cur % kBase;
            carry = cur / kBase;
            ++k;
        }
    }
    limbs_.assign(acc.begin(), acc.end());
    trim();
    return *this;
}

bool BigUint::operator<(const BigUint& other) const {
    if (limbs_.size() != other.limbs_.size()) return limbs_.size() < other.limbs_.size();
    for (std::size_t i = limbs_.size(); i-- > 0;)
        if (limbs_[i] != other.limbs_[i]) return limbs_[i] < other.limbs_[i];
    return false;
}

bool BigUint::fits_u64() const {
    BigUint max(UINT64_MAX);
    return *this < max || *this == max;
}

std::uint64_t BigUint::as_u64() const {
    std::uint64_t v = 0;
    for (std::size_t i = limbs_.size(); i-- > 0;) v = v * kBase + limbs_[i];
    return v;
}

double BigUint::as_double() const {
    double v = 0;
    for (std::size_t i = limbs_.size(); i-- > 0;) v = v * static_cast<double>(kBase) + limbs_[i];
    return v;
}

std::string BigUint::to_string() const {
    std::string s = std::to_string(limbs_.back());
    for (std::size_t i = limbs_.size() - 1; i-- > 0;) {
        std::string part = std::to_string(limbs_[i]);
        s += std::string(9 - part.size(), '0') + part;
    }
    return s;
}

} // namespace tailor
