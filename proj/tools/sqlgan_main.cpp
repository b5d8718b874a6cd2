#include "sqlgan/app.hpp"

int main(int argc, char** argv) { return sqlgan::app::run({argv + 1, argv + argc}); }
