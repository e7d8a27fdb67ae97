#include "lvm/cli.hpp"

int main(int argc, char** argv) {
    return lvm::cli::run(argc, argv);
}
