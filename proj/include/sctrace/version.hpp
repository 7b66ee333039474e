#pragma once

#define SCTRACE_VERSION "0.1.0"
