#include <doctest.h>
TEST_SUITE("profs") {}
