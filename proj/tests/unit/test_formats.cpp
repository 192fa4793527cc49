#include <doctest.h>

#include <cmath>

#include "meetsync/audio_io.hpp"
#include "meetsync/digest.hpp"
#include "meetsync/error.hpp"
#include "meetsync/tsv.hpp"
#include "support.hpp"

using namespace meetsync;

TEST_SUITE("formats") {
  TEST_CASE("fixed six-decimal formatting") {
    CHECK(tsv::fixed6(0.0) == "0.000000");
    CHECK(tsv::fixed6(2415.0) == "2415.000000");
    CHECK(tsv::fixed6(-0.0000004) == "0.000000");
    CHECK(tsv::fixed6(-0.0) == "0.000000");
    CHECK(tsv::fixed6(-0.25) == "-0.250000");
    CHECK(tsv::fixed6(1000.55) == "1000.550000");
    CHECK(tsv::fixed6(0.1234567) == "0.123457");
  }

  TEST_CASE("strict number parsing") {
    CHECK(tsv::parse_number("1.5") == 1.5);
    CHECK(tsv::parse_number("+2") == 2.0);
    CHECK(tsv::parse_number("-0.25") == -0.25);
    CHECK_FALSE(tsv::parse_number("abc").has_value());
    CHECK_FALSE(tsv::parse_number("1.5x").has_value());
    CHECK_FALSE(tsv::parse_number("").has_value());
    CHECK_FALSE(tsv::parse_number("nan").has_value());
    CHECK_FALSE(tsv::parse_number("inf").has_value());
  }

  TEST_CASE("reader reports file and line") {
    const std::string text = "a\tb\n1\t2\n3\n";
    tsv::Reader r(text, "x.tsv");
    r.expect_header({"a", "b"});
    REQUIRE(r.next());
    CHECK(r.number(0) == 1.0);
    try {
      r.next();
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::parse);
      CHECK(std::string(e.what()).find("x.tsv:3") != std::string::npos);
    }
  }

  TEST_CASE("reader rejects a wrong header and CRLF") {
    tsv::Reader r("a\tc\n", "h.tsv");
    CHECK_THROWS_AS(r.expect_header({"a", "b"}), Error);
    CHECK_THROWS_AS(tsv::Reader("a\tb\r\n1\t2\r\n", "c.tsv").expect_header({"a", "b"}), Error);
  }

  TEST_CASE("n/a handling") {
    tsv::Reader r("a\tb\nn/a\tx\n", "n.tsv");
    r.expect_header({"a", "b"});
    REQUIRE(r.next());
    CHECK_FALSE(r.optional_number(0).has_value());
    CHECK(r.optional_text(1) == "x");
    CHECK_THROWS_AS(r.number(0), Error);
  }

  TEST_CASE("sha256 known vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }

  TEST_CASE("file helpers create parents and round trip bytes") {
    testing::TempDir dir;
    const std::string bytes("a\0b\nc", 5);
    write_file(dir / "x/y/z.bin", bytes);
    CHECK(read_file(dir / "x/y/z.bin") == bytes);
    try {
      read_file(dir / "missing.bin");
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::io);
      CHECK(std::string(e.what()).find("missing.bin") != std::string::npos);
    }
  }

  TEST_CASE("WAV and float32 PCM round trip") {
    PcmBuffer pcm;
    pcm.sample_rate_hz = 8000;
    for (int i = 0; i < 800; ++i) pcm.samples.push_back(0.5 * std::sin(i * 0.1));
    const auto wav = encode_wav16(pcm);
    CHECK(wav.size() == 44 + 2 * 800);
    CHECK(wav.substr(0, 4) == "RIFF");
    const auto back = decode_wav16(wav, "t.wav");
    CHECK(back.sample_rate_hz == 8000);
    REQUIRE(back.samples.size() == 800);
    for (std::size_t i = 0; i < 800; ++i) CHECK(std::abs(back.samples[i] - pcm.samples[i]) <= 1.0 / 32767);

    const auto f32 = decode_f32(encode_f32(pcm), 8000, "t.f32");
    for (std::size_t i = 0; i < 800; ++i) CHECK(std::abs(f32.samples[i] - pcm.samples[i]) <= 1e-7);

    testing::TempDir dir;
    write_file(dir / "a.wav", wav);
    write_file(dir / "a.f32", encode_f32(pcm));
    CHECK(read_pcm(dir / "a.wav").samples.size() == 800);
    CHECK(read_pcm(dir / "a.f32", 8000).samples.size() == 800);
    write_file(dir / "a.mp3", "x");
    CHECK_THROWS_AS(read_pcm(dir / "a.mp3"), Error);
    CHECK_THROWS_AS(decode_wav16("RIFFxxxx", "bad.wav"), Error);
  }
}
