#include <doctest.h>
TEST_SUITE("vectorspace") {}
