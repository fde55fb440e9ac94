#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace skinbias {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Sex { female, male };
enum class Label { non_cancer = 0, cancer = 1 };

std::string_view to_string(Sex s);
std::string_view to_string(Label l);
Sex parse_sex(std::string_view text);

// Stable across platforms and runs; used for every derived seed.
std::uint64_t stable_hash(std::string_view text);
std::uint64_t mix_seed(std::uint64_t master, std::string_view key);

// splitmix64-based generator. The standard distributions are implementation
// defined, so sampling helpers live here instead.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next();
    double uniform();                        // [0, 1)
    double uniform(double lo, double hi);    // [lo, hi)
    std::size_t below(std::size_t bound);    // [0, bound)

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

// Runs fn(i) for i in [0, n) on up to `workers` threads (0 = hardware
// concurrency). Exceptions are rethrown after all workers finish.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn);

unsigned resolve_workers(unsigned requested);

// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

std::string format_double(double v, int significant = 10);
std::string format_ratio(double ratio);

void log_warning(std::string_view message);
void log_info(std::string_view message);
void set_quiet(bool quiet);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

}  // namespace skinbias
