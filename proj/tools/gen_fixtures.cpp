// Writes the shipped fixture graphs and configs under a target directory.
// Usage: gen_fixtures [dir]   (default: fixtures)

#include "tailor/fixtures.hpp"
#include "tailor/graph.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

int main(int argc, char** argv) {
    namespace fx = tailor::fixtures;
    std::string dir = argc > 1 ? argv[1] : "fixtures";
    std::filesystem::create_directories(dir);

    auto write = [&](const std::string& name, const std::string& content) {
        std::ofstream out(dir + "/" + name, std::ios::binary);
        if (!out) {
            std::cerr << "cannot write " << dir << "/" << name << "\n";
            std::exit(1);
        }
        out << content;
        std::cerr << "wrote " << dir << "/" << name << "\n";
    };

    write("tinynet.tfg", tailor::export_graph(fx::tinynet()));
    write("tinynet1s.tfg", tailor::export_graph(fx::tinynet1s()));
    write("tinynet4s.tfg", tailor::export_graph(fx::tinynet4s()));
    write("tinyformer.tfg", tailor::export_graph(fx::tinyformer()));
    write("tinyffn.tfg", tailor::export_graph(fx::tinyffn()));
    write("tinynet_example.toml", fx::tinynet_example_config());
    write("tinynet_full.toml", fx::tinynet_full_config());
    write("tinynet1s.toml", fx::tinynet1s_config());
    write("tinynet4s.toml", fx::tinynet4s_config());
    write("tinyformer.toml", fx::tinyformer_config());
    return 0;
}
