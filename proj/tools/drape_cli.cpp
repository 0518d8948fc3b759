#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"garment draping pipeline"};
    app.require_subcommand(0, 1);
    CLI11_PARSE(app, argc, argv);
    if (app.get_subcommands().empty()) {
        std::cout << app.help() << std::endl;
    }
    return 0;
}
