#include <doctest.h>

#include "oracles.hpp"
#include "prcara/error.hpp"
#include "prcara/sci_codec.hpp"

using namespace prcara;

TEST_CASE("encoding matches the bit-string packing") {
  Rng rng(5);
  std::uniform_int_distribution<int> u(0, 255);
  for (int i = 0; i < 20000; ++i) {
    ExtendedSci s;
    s.priority = static_cast<std::uint8_t>(u(rng) % 8);
    s.ri1 = static_cast<std::uint8_t>(u(rng) % 32);
    s.ri2 = static_cast<std::uint8_t>(u(rng) % 128);
    s.rri_code = static_cast<std::uint8_t>(u(rng) % 16);
    s.mcs = static_cast<std::uint8_t>(u(rng) % 32);
    s.dmrs_and_misc = static_cast<std::uint8_t>(u(rng));
    const auto word = encode_sci(s);
    REQUIRE(word == oracle::sci_word(s));
    REQUIRE(decode_sci(word) == s);
  }
}

TEST_CASE("field overflow names the field") {
  ExtendedSci s;
  s.ri2 = 128;
  try {
    (void)encode_sci(s);
    FAIL("expected EncodeError");
  } catch (const EncodeError& e) {
    CHECK(e.field() == "ri2");
  }
  s.ri2 = 0;
  s.priority = 8;
  CHECK_THROWS_AS((void)encode_sci(s), EncodeError);
}

TEST_CASE("reservation offsets at the boundaries") {
  auto sci = sci_for_reservation(ResourceIndex{2, 227}, 100);
  CHECK(sci.ri2 == 127);
  CHECK(reservation_of(sci, 100) == ResourceIndex{2, 227});
  sci = sci_for_reservation(ResourceIndex{2, 228}, 100);
  CHECK(sci.ri2 == 0);
  CHECK_FALSE(reservation_of(sci, 100).has_value());
  sci = sci_for_reservation(std::nullopt, 100);
  CHECK(sci.ri1 == 0);
  CHECK(sci.ri2 == 0);
}

TEST_CASE("subchannel beyond the pool is invalid") {
  auto sci = sci_for_reservation(ResourceIndex{5, 120}, 100);
  CHECK_THROWS_AS(validate_sci(sci, 5), EncodeError);
  CHECK_NOTHROW(validate_sci(sci, 6));
}

TEST_CASE("RRI codes") {
  CHECK(rri_code_for_ms(100) == 1);
  CHECK(rri_code_for_ms(1000) == 10);
  CHECK(rri_code_for_ms(50) == 11);
  CHECK(rri_code_for_ms(20) == 12);
  CHECK_THROWS_AS(rri_code_for_ms(30), DomainError);
  for (int ms : {20, 50, 100, 300, 1000}) CHECK(rri_ms_from_code(rri_code_for_ms(ms)) == ms);
  CHECK(rri_ms_from_code(0) == 0);
  CHECK(rri_ms_from_code(15) == 0);
}

TEST_CASE("debug string roundtrip") {
  ExtendedSci s{3, 4, 20, 12, 3, 7};
  CHECK(parse_debug_string(to_debug_string(s)) == s);
}
