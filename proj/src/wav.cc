/*
 Copyright 2026 The VATTS Authors.

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      http://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "vatts/corpus.h"
#include "vatts/error.h"

namespace vatts::corpus {

namespace {

std::uint32_t le32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace

AudioBuffer read_wav(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file " + path.string());
  const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                       std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw DataError(where + "not a RIFF/WAVE file (truncated header?)");

  bool have_fmt = false;
  int channels = 0, bits = 0, rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::uint32_t size = le32(buf.data() + pos + 4);
    const unsigned char* body = buf.data() + pos + 8;
    const std::size_t avail = buf.size() - pos - 8;
    if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0) {
      if (size < 16 || avail < 16) throw DataError(where + "truncated fmt chunk");
      const int format = le16(body);
      channels = le16(body + 2);
      rate = static_cast<int>(le32(body + 4));
      bits = le16(body + 14);
      if (format != 1) throw DataError(where + "non-PCM WAV (format " + std::to_string(format) + ")");
      if (channels != 1)
        throw DataError(where + "mono required (file has " + std::to_string(channels) + " channels)");
      if (bits != 16) throw DataError(where + "16-bit PCM required");
      if (rate <= 0) throw DataError(where + "invalid sample rate");
      have_fmt = true;
    } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
      if (!have_fmt) throw DataError(where + "data chunk before fmt chunk");
      if (size > avail) throw DataError(where + "truncated data chunk");
      AudioBuffer audio;
      audio.sample_rate = rate;
      audio.samples.resize(size / 2);
      for (std::size_t i = 0; i < audio.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(le16(body + 2 * i));
        audio.samples[i] = v / 32768.0;
      }
      return audio;
    }
    pos += 8 + size + (size & 1);
  }
  throw DataError(where + (have_fmt ? "missing data chunk" : "missing fmt chunk"));
}

void write_wav(const fs::path& path, const AudioBuffer& audio) {
  if (audio.sample_rate <= 0) throw DataError("cannot write WAV with non-positive sample rate");
  const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(audio.sample_rate));
  put32(out, static_cast<std::uint32_t>(audio.sample_rate) * 2);
  put16(out, 2);
  put16(out, 16);
  out += "data";
  put32(out, data_bytes);
  for (double s : audio.samples) {
    const double q = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write WAV file " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace vatts::corpus
