std::cout << "hello" << std::endl;
printf("%d\n", 42);
// nothing but output statements and comments here
/* the cleaner removes every line above */
