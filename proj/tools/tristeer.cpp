#include "tristeer/cli.hpp"

int main(int argc, char** argv) { return tristeer::run(argc, argv); }
