#include <semiclassic/cli.hpp>

int main(int argc, char** argv) { return semiclassic::run_cli(argc, argv); }
