// Writes the synthetic fixture dataset (manifest, placeholder screenshots and
// scripted mock answers) used by the tests and the README walkthrough.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "maturity/testing.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Generate the synthetic fixture dataset"};
    std::string out_dir = "fixtures";
    size_t apps_per_class = 10;
    uint64_t seed = 7;
    app.add_option("--out", out_dir, "Fixture directory")->capture_default_str();
    app.add_option("--apps-per-class", apps_per_class, "Apps per rating class")
        ->capture_default_str();
    app.add_option("--seed", seed, "Generation seed")->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    try {
        const auto fixture = maturity::testing::generate_fixture(out_dir, apps_per_class, seed);
        std::cout << "manifest: " << fixture.manifest_path.string() << "\n"
                  << "mock:     " << fixture.mock_fixture_path.string() << "\n"
                  << "images:   " << fixture.images_dir.string() << "\n"
                  << "apps:     " << fixture.plan.size() << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
