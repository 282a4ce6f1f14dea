#include <doctest.h>
TEST_SUITE("datasets") {}
