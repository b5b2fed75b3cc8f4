#include "bevodo/app.hpp"

int main(int argc, char** argv) { return bevodo::run_cli(argc, argv); }
