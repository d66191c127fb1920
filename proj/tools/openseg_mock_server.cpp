// Serves the mock backends of a fixture directory over the HTTP wire protocol.

#include "openseg/backends/http.hpp"
#include "openseg/backends/mock.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Mock chat/segment/embed services over HTTP"};
    app.name("openseg_mock_server");
    std::string mock_dir;
    std::string host = "127.0.0.1";
    int port = 8080;
    app.add_option("--mock", mock_dir, "Fixture directory with chat.json, segment.json, embed.json")->required();
    app.add_option("--host", host, "Bind address");
    app.add_option("--port", port, "Port (0 picks a free one)");
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const std::filesystem::path dir(mock_dir);
        openseg::backends::FixtureChat chat(dir / "chat.json");
        openseg::backends::MockSegment segment(dir / "segment.json");
        openseg::backends::MockEmbed embed(dir / "embed.json");

        httplib::Server server;
        openseg::backends::mount_backends(server, &chat, &segment, &embed);
        if (port == 0) {
            port = server.bind_to_any_port(host);
        } else if (!server.bind_to_port(host, port)) {
            std::cerr << "error: cannot bind " << host << ":" << port << "\n";
            return 1;
        }
        std::cout << "listening on http://" << host << ":" << port << std::endl;
        server.listen_after_bind();
    } catch (const openseg::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
