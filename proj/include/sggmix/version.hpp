#pragma once

#define SGGMIX_VERSION "0.1.0"
