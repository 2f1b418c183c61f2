// Copyright 2026 The tsaseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the license.

#include <cstring>

#include "binary_io.hpp"
#include "tsaseg/trainer.hpp"

namespace tsaseg {

namespace {

void put_params(io::ByteWriter& w, const SegNetParams& p) {
    w.u32(static_cast<std::uint32_t>(p.feature_dim()));
    w.u32(static_cast<std::uint32_t>(p.classes()));
    for (auto block : p.blocks()) w.f64s(block);
}

void put_stats(io::ByteWriter& w, const ClassStats& s) {
    w.f64(s.weight);
    w.f64s(s.mean.span());
    w.f64s(s.cov.packed());
}

void put_bank(io::ByteWriter& w, const StatsBank& bank) {
    w.u32(static_cast<std::uint32_t>(bank.classes()));
    w.u32(static_cast<std::uint32_t>(bank.dim()));
    w.f64(bank.momentum());
    for (Domain domain : {Domain::source, Domain::target})
        for (std::size_t c = 0; c < bank.classes(); ++c) put_stats(w, bank.stats(domain, static_cast<Label>(c)));
}

void put_section(io::ByteWriter& out, const io::ByteWriter& section) {
    out.u64(section.buffer().size());
    out.bytes(section.buffer().data(), section.buffer().size());
}

[[noreturn]] void fail(FormatErrc code, const std::filesystem::path& path, const std::string& what) {
    throw FormatError(code, path.string() + ": " + what);
}

template <class Reader>
void get_params(Reader& r, SegNetParams& p, const std::filesystem::path& path, const char* name) {
    const std::uint32_t d = r.u32();
    const std::uint32_t c = r.u32();
    if (d != p.feature_dim() || c != p.classes())
        fail(FormatErrc::dimension_mismatch, path,
             std::string(name) + " has d=" + std::to_string(d) + ", C=" + std::to_string(c) + " but d=" +
                 std::to_string(p.feature_dim()) + ", C=" + std::to_string(p.classes()) + " was expected");
    for (auto block : p.blocks()) {
        const std::vector<double> values = r.f64s();
        if (values.size() != block.size()) fail(FormatErrc::dimension_mismatch, path, std::string(name) + " block size");
        std::copy(values.begin(), values.end(), block.begin());
    }
}

template <class Reader>
void get_bank(Reader& r, StatsBank& bank, const std::filesystem::path& path) {
    const std::uint32_t classes = r.u32();
    const std::uint32_t d = r.u32();
    if (classes != bank.classes() || d != bank.dim())
        fail(FormatErrc::dimension_mismatch, path, "stats bank dimensions differ from the configuration");
    StatsBank loaded(classes, d, r.f64());
    for (Domain domain : {Domain::source, Domain::target})
        for (std::size_t c = 0; c < classes; ++c) {
            ClassStats& s = loaded.stats(domain, static_cast<Label>(c));
            s.weight = r.f64();
            const auto mean = r.f64s();
            const auto cov = r.f64s();
            if (mean.size() != d || cov.size() != s.cov.packed().size())
                fail(FormatErrc::dimension_mismatch, path, "stats bank entry size");
            s.mean = Vec(mean);
            std::copy(cov.begin(), cov.end(), s.cov.packed().begin());
        }
    bank = std::move(loaded);
}

} // namespace

void checkpoint_save(const std::filesystem::path& path, const TrainerState& state) {
    io::ByteWriter out;
    out.bytes("TMS1", 4);
    out.u32(kCheckpointVersion);

    io::ByteWriter student, teacher, bank, optimizer, rng, counter;
    put_params(student, state.student);
    put_params(teacher, state.teacher);
    put_bank(bank, state.bank);
    put_params(optimizer, state.velocity);
    rng.str(state.rng.serialize());
    counter.u64(static_cast<std::uint64_t>(state.iteration));
    for (const auto* s : {&student, &teacher, &bank, &optimizer, &rng, &counter}) put_section(out, *s);

    if (!io::write_file(path, out.buffer())) fail(FormatErrc::write_failed, path, "cannot write checkpoint");
}

void checkpoint_load(const std::filesystem::path& path, TrainerState& state) {
    std::vector<unsigned char> data;
    if (!io::read_file(path, data)) fail(FormatErrc::open_failed, path, "cannot open checkpoint");
    auto on_short = [&] { fail(FormatErrc::truncated, path, "truncated checkpoint"); };
    io::ByteReader r(data, on_short);

    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, "TMS1", 4) != 0) fail(FormatErrc::magic_mismatch, path, "not a TMS1 checkpoint");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        fail(FormatErrc::version_mismatch, path, "unsupported checkpoint version " + std::to_string(version));

    TrainerState loaded = state;
    auto section = [&] {
        const std::uint64_t n = r.u64();
        return io::ByteReader(r.take(n), on_short);
    };
    {
        auto s = section();
        get_params(s, loaded.student, path, "student");
    }
    {
        auto s = section();
        get_params(s, loaded.teacher, path, "teacher");
    }
    {
        auto s = section();
        get_bank(s, loaded.bank, path);
    }
    {
        auto s = section();
        get_params(s, loaded.velocity, path, "optimizer");
    }
    {
        auto s = section();
        try {
            loaded.rng = Rng::deserialize(s.str());
        } catch (const std::runtime_error& e) {
            fail(FormatErrc::truncated, path, e.what());
        }
    }
    {
        auto s = section();
        loaded.iteration = static_cast<std::int64_t>(s.u64());
    }
    state = std::move(loaded);
}

} // namespace tsaseg
