// Checks any chat/segment/embed service against the wire protocol.
// Prints one PASS/FAIL line per check. Exit status: 0 all passed, 1 a check
// failed or a service was unreachable, 2 usage error.

#include "openseg/backends/conformance.hpp"
#include "openseg/reasoner/prompts.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Wire-protocol conformance suite"};
    app.name("openseg_conformance");
    std::optional<std::string> chat_url;
    std::optional<std::string> segment_url;
    std::optional<std::string> embed_url;
    std::string image;
    app.add_option("--chat-url", chat_url, "Chat endpoint to check");
    app.add_option("--segment-url", segment_url, "Segment endpoint to check");
    app.add_option("--embed-url", embed_url, "Embed endpoint to check");
    app.add_option("--image", image, "Image the services accept")->required();
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (!chat_url && !segment_url && !embed_url) {
        std::cerr << "usage error: give at least one of --chat-url, --segment-url, --embed-url\n";
        return 2;
    }
    try {
        openseg::backends::conformance::Target target;
        target.chat_url = chat_url;
        target.segment_url = segment_url;
        target.embed_url = embed_url;
        target.image_bytes = openseg::detail::read_file(image);
        target.image_mime = openseg::reasoner::mime_for(image);
        bool ok = true;
        for (const auto& r : openseg::backends::conformance::run(target)) {
            std::cout << (r.passed ? "PASS " : "FAIL ") << r.name;
            if (!r.detail.empty()) {
                std::cout << ": " << r.detail;
            }
            std::cout << "\n";
            ok = ok && r.passed;
        }
        return ok ? 0 : 1;
    } catch (const openseg::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
