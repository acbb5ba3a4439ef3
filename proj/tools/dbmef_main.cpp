#include "dbmef/cli.hpp"

int main(int argc, char** argv) { return dbmef::run_cli(argc, argv); }
