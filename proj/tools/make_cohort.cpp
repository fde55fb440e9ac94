// Writes a synthetic cohort shaped like the cleaned dataset (same Table 1
// cells), for trying the pipeline without the real images.
#include "cohort.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Generate a synthetic lesion cohort"};
    std::string dir;
    skinbias::testing::CohortOptions options;
    bool clean = false;
    app.add_option("dir", dir, "output directory")->required();
    app.add_option("--seed", options.seed, "generator seed");
    app.add_option("--size", options.image_size, "image side in pixels")->check(CLI::Range(24, 512));
    app.add_flag("--clean", clean, "do not inject missing-sex and duplicate rows");
    CLI11_PARSE(app, argc, argv);
    options.inject_errors = !clean;
    try {
        const auto c = skinbias::testing::write_cohort(dir, options);
        std::cout << "metadata " << c.metadata.string() << "\nimages   " << c.images.string() << "\nmasks    "
                  << c.masks.string() << "\n" << c.rows << " rows\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
