#include "cli.hpp"

int main(int argc, char** argv)
{
    return eqport::cli::run(argc, argv);
}
