// Rewrites a LENS checkpoint with every weight set to zero.
#include <fstream>
#include <iostream>

#include "lens/model.hpp"

int main(int argc, char** argv) {
    if (argc != 3) {
        std::cerr << "usage: zero_checkpoint <in> <out>\n";
        return 1;
    }
    std::ifstream in(argv[1]);
    auto checkpoint = nlohmann::json::parse(in);
    auto model = lens::LensModel::from_json(checkpoint.at("lens"));
    model.zero_parameters();
    checkpoint["lens"] = model.to_json();
    std::ofstream(argv[2]) << checkpoint.dump() << '\n';
    return 0;
}
