#include <stdio.h>
#include <string.h>

#include "cfa2.h"

int main(void) {
    Cfa2Program *prog = NULL;
    if (cfa2_compile("((lambda (id) (id 1) (id 2)) (lambda (x) x))", "double-id", &prog) != CFA2_STATUS_OK) {
        fprintf(stderr, "compile: %s\n", cfa2_last_error());
        return 1;
    }
    char *out = NULL;
    if (cfa2_run(prog, 1000, &out) != CFA2_STATUS_OK || strcmp(out, "2") != 0) {
        return 2;
    }
    cfa2_string_free(out);
    Cfa2Options options = cfa2_default_options();
    if (cfa2_analyze(prog, CFA2_ANALYSIS_CFA2, &options, &out) != CFA2_STATUS_OK) {
        return 3;
    }
    if (strstr(out, "\"finals\":[\"2\"]") == NULL) {
        fprintf(stderr, "%s\n", out);
        return 4;
    }
    cfa2_string_free(out);
    cfa2_program_free(prog);
    if (cfa2_compile("(lambda (x)", NULL, &prog) != CFA2_STATUS_COMPILE_ERROR || prog != NULL) {
        return 5;
    }
    puts("ok");
    return 0;
}
